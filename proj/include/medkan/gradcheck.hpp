#pragma once

#include <functional>
#include <string>
#include <vector>

#include "medkan/tensor.hpp"

namespace medkan {

/// Worst relative error between analytic gradients and central finite
/// differences (f64, step h) over every element of every target tensor.
/// loss_fn must rebuild the computation from the targets' current data.
double fd_max_rel_err(const std::function<Tensor<double>()>& loss_fn,
                      const std::vector<std::pair<std::string, Tensor<double>>>& targets,
                      double step = 1e-5, std::string* worst_at = nullptr);

struct GradcheckEntry {
    std::string kind;
    double worst_rel_err = 0;
    std::string worst_at;
    bool pass = false;
};

struct GradcheckReport {
    std::vector<GradcheckEntry> entries;
    double threshold = 1e-5;
    bool all_pass = false;
};

/// Runs every registered finite-difference suite in f64: primitive ops,
/// both KAN layers over both grid kinds, each architecture block, and a full
/// toy model. with_corrupt_fixture adds a deliberately broken backward rule
/// that must be caught (self-test of the harness).
GradcheckReport run_gradcheck(bool with_corrupt_fixture = false);

} // namespace medkan
