#pragma once

#include "elastic_paths/core.hpp"
#include "elastic_paths/data.hpp"
#include "elastic_paths/dataset.hpp"
#include "elastic_paths/descent.hpp"
#include "elastic_paths/elastic_net.hpp"
#include "elastic_paths/experiment.hpp"
#include "elastic_paths/flow.hpp"
#include "elastic_paths/io.hpp"
#include "elastic_paths/linalg.hpp"
#include "elastic_paths/magnus.hpp"
#include "elastic_paths/metrics.hpp"

namespace elastic_paths {

inline constexpr const char* kVersion = "0.1.0";

} // namespace elastic_paths
