#pragma once

#include <stdexcept>
#include <string>

namespace tsiv {

struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

struct UnstableProcessError : std::runtime_error {
    explicit UnstableProcessError(const std::string& what) : std::runtime_error(what) {}
};

struct RankDeficientError : std::runtime_error {
    explicit RankDeficientError(const std::string& what) : std::runtime_error(what) {}
};

struct SingularWeightError : std::runtime_error {
    explicit SingularWeightError(const std::string& what) : std::runtime_error(what) {}
};

struct RejectionBudgetError : std::runtime_error {
    explicit RejectionBudgetError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tsiv
