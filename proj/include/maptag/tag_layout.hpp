#pragma once

// Printed tag layout: a white margin ring, a black border ring and the
// payload grid, all in square modules. The tag side `a` spans the full sheet
// including the margin; detected vertices are the outer corners of the black
// border.

#include "maptag/error.hpp"

namespace maptag {

struct TagLayout {
  int payload = 4;
  int border = 1;
  int margin = 1;

  int modules_across() const { return payload + 2 * border + 2 * margin; }
  /// Side of the black frame for a tag of full side `side`.
  double frame_side(double side) const { return side * (payload + 2 * border) / modules_across(); }
  double module_size(double side) const { return side / modules_across(); }

  void validate() const {
    if (payload < 1 || border < 1 || margin < 1) throw Error(ErrorCode::InvalidConfig, "tag layout needs positive module counts");
  }
};

}  // namespace maptag
