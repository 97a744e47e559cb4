#pragma once

#include <string>

#include "subln/lab.hpp"

namespace subln::report {

// Line plot of mean delta_f against L (log2 axis), one polyline per arm.
std::string depth_sweep_svg(const lab::SweepResult& result);

// Per-arm table: L, mean, std, diverged count and bound.
std::string depth_sweep_summary(const lab::SweepResult& result);

}  // namespace subln::report
