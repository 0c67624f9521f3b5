#pragma once

#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <string>
#include <vector>

#include "tlbench/rng.hpp"
#include "tlbench/tensor.hpp"

namespace testing {

inline tlbench::Tensor random_tensor(tlbench::Shape shape, tlbench::Rng& rng, bool grad = false,
                                     double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(tlbench::shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return tlbench::Tensor::from(std::move(shape), std::move(v), grad);
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("tlbench-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

} // namespace testing
