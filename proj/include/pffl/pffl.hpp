#pragma once

// Single include for the whole library.

#include "pffl/attack.hpp"
#include "pffl/errors.hpp"
#include "pffl/feature_map.hpp"
#include "pffl/fixtures.hpp"
#include "pffl/harness.hpp"
#include "pffl/image.hpp"
#include "pffl/metrics.hpp"
#include "pffl/oracle.hpp"
#include "pffl/oracle_http.hpp"
#include "pffl/png_io.hpp"
#include "pffl/rng.hpp"
#include "pffl/tensor_format.hpp"
