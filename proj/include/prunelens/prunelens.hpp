#pragma once

#include "prunelens/alignment.hpp"
#include "prunelens/error.hpp"
#include "prunelens/fixture.hpp"
#include "prunelens/metrics.hpp"
#include "prunelens/model.hpp"
#include "prunelens/numerics.hpp"
#include "prunelens/perturb.hpp"
#include "prunelens/probes.hpp"
#include "prunelens/pruning.hpp"
#include "prunelens/report.hpp"
#include "prunelens/tasks.hpp"
#include "prunelens/trace_io.hpp"
#include "prunelens/weights_io.hpp"

namespace prunelens {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace prunelens
