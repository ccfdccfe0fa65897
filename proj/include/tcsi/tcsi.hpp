#pragma once

#include "tcsi/errors.hpp"
#include "tcsi/tensor.hpp"
#include "tcsi/tucker.hpp"
#include "tcsi/observations.hpp"
#include "tcsi/inner_solve.hpp"
#include "tcsi/geometry.hpp"
#include "tcsi/objective.hpp"
#include "tcsi/solver.hpp"
#include "tcsi/synth.hpp"
#include "tcsi/io.hpp"
#include "tcsi/checks.hpp"

namespace tcsi {
inline constexpr const char* kVersion = "0.1.0";
}  // namespace tcsi
