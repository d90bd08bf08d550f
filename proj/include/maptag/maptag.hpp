#pragma once

#include "maptag/candidate_filter.hpp"
#include "maptag/cloud.hpp"
#include "maptag/cluster_obb.hpp"
#include "maptag/decoder.hpp"
#include "maptag/dictionary.hpp"
#include "maptag/error.hpp"
#include "maptag/geometry.hpp"
#include "maptag/gradient.hpp"
#include "maptag/image.hpp"
#include "maptag/json_util.hpp"
#include "maptag/parallel.hpp"
#include "maptag/pcd_io.hpp"
#include "maptag/pipeline.hpp"
#include "maptag/plane_reprojection.hpp"
#include "maptag/pose.hpp"
#include "maptag/scene.hpp"
#include "maptag/scene_io.hpp"
#include "maptag/spatial_index.hpp"
#include "maptag/tag_layout.hpp"
