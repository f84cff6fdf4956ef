#pragma once

#include "mono3d/bench.hpp"
#include "mono3d/core.hpp"
#include "mono3d/eval.hpp"
#include "mono3d/geometry.hpp"
#include "mono3d/gradcheck.hpp"
#include "mono3d/heatmap.hpp"
#include "mono3d/io.hpp"
#include "mono3d/kitti_io.hpp"
#include "mono3d/litefpn.hpp"
#include "mono3d/losses.hpp"
#include "mono3d/report.hpp"
#include "mono3d/svg.hpp"
#include "mono3d/synth.hpp"
