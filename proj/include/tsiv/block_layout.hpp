#pragma once

#include <string>
#include <vector>

#include "tsiv/errors.hpp"

namespace tsiv {

/// Half-open index range [begin, end) into the state vector.
struct IndexRange {
    int begin = 0;
    int end = 0;
    int size() const { return end - begin; }
    bool contains(int i) const { return i >= begin && i < end; }
};

/// Dimensions of the four named blocks of the state vector, laid out in the
/// fixed order I, H, X, Y. Estimators that require a scalar response check
/// d_Y == 1 themselves; the layout permits general d_Y.
struct BlockLayout {
    int d_I = 0;
    int d_H = 0;
    int d_X = 0;
    int d_Y = 0;

    int total() const { return d_I + d_H + d_X + d_Y; }

    IndexRange I() const { return {0, d_I}; }
    IndexRange H() const { return {d_I, d_I + d_H}; }
    IndexRange X() const { return {d_I + d_H, d_I + d_H + d_X}; }
    IndexRange Y() const { return {d_I + d_H + d_X, d_I + d_H + d_X + d_Y}; }

    void validate() const {
        if (d_I < 0 || d_H < 0 || d_X < 0 || d_Y < 0)
            throw DimensionError("BlockLayout: dimensions must be nonnegative");
        if (total() < 1) throw DimensionError("BlockLayout: empty state vector");
    }

    /// Component label such as "I1", "H1", "X2", "Y1" for CSV headers.
    std::string component_name(int i) const {
        if (I().contains(i)) return "I" + std::to_string(i - I().begin + 1);
        if (H().contains(i)) return "H" + std::to_string(i - H().begin + 1);
        if (X().contains(i)) return "X" + std::to_string(i - X().begin + 1);
        if (Y().contains(i)) return "Y" + std::to_string(i - Y().begin + 1);
        throw DimensionError("component index out of range");
    }

    std::vector<std::string> component_names() const {
        std::vector<std::string> names;
        names.reserve(total());
        for (int i = 0; i < total(); ++i) names.push_back(component_name(i));
        return names;
    }
};

}  // namespace tsiv
