#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace rfio {

// Dense row-major 2-D array of block values.
template <class T>
struct BlockGrid {
    int nx = 0;
    int ny = 0;
    std::vector<T> data;

    BlockGrid() = default;
    BlockGrid(int nx_, int ny_, T fill = T{}) : nx(nx_), ny(ny_), data(std::size_t(nx_) * ny_, fill) {}

    bool contains(int i, int j) const { return i >= 0 && i < nx && j >= 0 && j < ny; }
    T& operator()(int i, int j) { return data[std::size_t(j) * nx + i]; }
    const T& operator()(int i, int j) const { return data[std::size_t(j) * nx + i]; }
    std::size_t size() const { return data.size(); }
};

using Mask = BlockGrid<std::uint8_t>;

// Labels of 8-connected components of the set cells (0 = not in the set,
// components numbered from 1 in scan order).
BlockGrid<int> label_components(const Mask& mask, int* count = nullptr);

// Union of the 3x3 neighborhoods of the set cells, clipped to the grid.
Mask dilate(const Mask& mask);

// Cells outside the mask that are not 4-connected to the outside of the grid.
Mask holes(const Mask& mask);

std::size_t count(const Mask& mask);

}  // namespace rfio
