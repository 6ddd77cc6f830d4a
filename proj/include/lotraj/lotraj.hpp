#pragma once

#include "lotraj/common.hpp"
#include "lotraj/kinematics.hpp"
#include "lotraj/trajectory.hpp"
#include "lotraj/qp.hpp"
#include "lotraj/nlp.hpp"
#include "lotraj/config_io.hpp"
#include "lotraj/database.hpp"
#include "lotraj/regression.hpp"
#include "lotraj/pipeline.hpp"
#include "lotraj/simulator.hpp"

namespace lotraj {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace lotraj
