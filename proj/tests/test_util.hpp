#pragma once

// Shared test helpers: random tensors, finite-difference gradient oracle,
// scratch directories.

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "edgeprune/tensor.hpp"

namespace eptest {

using edgeprune::Shape;
using edgeprune::Tensor;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, float scale = 1.0f,
                            bool requires_grad = true) {
    std::normal_distribution<float> dist(0.0f, scale);
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (float& v : t.values()) v = dist(rng);
    return t;
}

// Relative error with a floor: central differences of an f32-valued loss
// carry round-off of order eps32 * |loss| / (2h), so comparisons against
// near-zero gradients need an absolute scale.
inline double rel_err(double a, double b, double floor = 0.1) {
    return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), floor);
}

// Central finite differences on one coordinate of one input.
// loss_fn must rebuild the computation from scratch (values are mutated).
inline double finite_diff(Tensor& param, int64_t coord, const std::function<double()>& loss_fn,
                          double h = 5e-3) {
    float* p = param.data();
    const float saved = p[coord];
    p[coord] = static_cast<float>(saved + h);
    const double up = loss_fn();
    p[coord] = static_cast<float>(saved - h);
    const double down = loss_fn();
    p[coord] = saved;
    return (up - down) / (2.0 * h);
}

// Fresh scratch directory under the system temp dir.
inline std::string scratch_dir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    std::string path = (std::filesystem::temp_directory_path() /
                        ("edgeprune-test-" + tag + "-" + std::to_string(rng())))
                           .string();
    std::filesystem::create_directories(path);
    return path;
}

}  // namespace eptest
