#pragma once

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "gtee/numeric/tensor.hpp"
#include "gtee/ontology.hpp"
#include "gtee/rng.hpp"

namespace gtee::testing {

inline std::filesystem::path data_dir() { return GTEE_TEST_DATA_DIR; }

inline EventOntology toy_ontology() { return load_ontology(data_dir() / "ontologies" / "toy.json"); }
inline EventOntology ace_ontology() { return load_ontology(data_dir() / "ontologies" / "ace05.json"); }

inline num::Tensor random_tensor(num::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                                 bool requires_grad = true) {
    std::vector<double> v(num::numel(shape));
    for (double& x : v) x = rng.uniform(lo, hi);
    return num::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Scratch directory removed on destruction.
class TempDir {
   public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() / ("gtee_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }

   private:
    std::filesystem::path path_;
};

inline void check_close(std::span<const double> a, std::span<const double> b, double tol) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol);
}

}  // namespace gtee::testing
