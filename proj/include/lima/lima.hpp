#pragma once

#include "lima/aggregation.hpp"
#include "lima/augment.hpp"
#include "lima/common.hpp"
#include "lima/encoders.hpp"
#include "lima/geometry.hpp"
#include "lima/losses.hpp"
#include "lima/memory.hpp"
#include "lima/metrics.hpp"
#include "lima/mixing.hpp"
#include "lima/optim.hpp"
#include "lima/pointcloud.hpp"
#include "lima/scene.hpp"
#include "lima/sequence_io.hpp"
#include "lima/trainer.hpp"
