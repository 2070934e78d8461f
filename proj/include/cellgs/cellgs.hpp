#pragma once

// Everything except the command-line driver.
#include "cellgs/error.hpp"
#include "cellgs/math.hpp"
#include "cellgs/image.hpp"
#include "cellgs/camera.hpp"
#include "cellgs/parallel.hpp"
#include "cellgs/core/ray.hpp"
#include "cellgs/core/sh.hpp"
#include "cellgs/core/splat.hpp"
#include "cellgs/ingest/text.hpp"
#include "cellgs/ingest/scene.hpp"
#include "cellgs/ingest/colmap.hpp"
#include "cellgs/ingest/ply.hpp"
#include "cellgs/ingest/scene_io.hpp"
#include "cellgs/ingest/manhattan.hpp"
#include "cellgs/partition/polygon.hpp"
#include "cellgs/partition/layout.hpp"
#include "cellgs/partition/visibility.hpp"
#include "cellgs/partition/manifest.hpp"
#include "cellgs/render/renderer.hpp"
#include "cellgs/render/depth_normal.hpp"
#include "cellgs/render/pose_file.hpp"
#include "cellgs/appearance/bspline.hpp"
#include "cellgs/appearance/layers.hpp"
#include "cellgs/appearance/model.hpp"
#include "cellgs/train/params.hpp"
#include "cellgs/train/loss.hpp"
#include "cellgs/train/backward.hpp"
#include "cellgs/train/graph.hpp"
#include "cellgs/train/adam.hpp"
#include "cellgs/train/config.hpp"
#include "cellgs/train/densify.hpp"
#include "cellgs/train/trainer.hpp"
#include "cellgs/stitch/stitch.hpp"
#include "cellgs/metrics/metrics.hpp"
#include "cellgs/metrics/evaluate.hpp"
#include "cellgs/synth/demo.hpp"
