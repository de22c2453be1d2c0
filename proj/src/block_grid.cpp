#include "rfio/block_grid.hpp"

#include <deque>

namespace rfio {

BlockGrid<int> label_components(const Mask& mask, int* count) {
    BlockGrid<int> labels(mask.nx, mask.ny, 0);
    int next = 0;
    std::deque<std::pair<int, int>> queue;
    for (int j = 0; j < mask.ny; ++j)
        for (int i = 0; i < mask.nx; ++i) {
            if (!mask(i, j) || labels(i, j)) continue;
            labels(i, j) = ++next;
            queue.emplace_back(i, j);
            while (!queue.empty()) {
                const auto [x, y] = queue.front();
                queue.pop_front();
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int u = x + dx, v = y + dy;
                        if (mask.contains(u, v) && mask(u, v) && !labels(u, v)) {
                            labels(u, v) = next;
                            queue.emplace_back(u, v);
                        }
                    }
            }
        }
    if (count) *count = next;
    return labels;
}

Mask dilate(const Mask& mask) {
    Mask out(mask.nx, mask.ny, 0);
    for (int j = 0; j < mask.ny; ++j)
        for (int i = 0; i < mask.nx; ++i) {
            if (!mask(i, j)) continue;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if (out.contains(i + dx, j + dy)) out(i + dx, j + dy) = 1;
        }
    return out;
}

Mask holes(const Mask& mask) {
    // Flood the complement from a one-cell frame around the grid.
    const int nx = mask.nx + 2, ny = mask.ny + 2;
    Mask outside(nx, ny, 0);
    auto blocked = [&](int i, int j) {
        const int u = i - 1, v = j - 1;
        return mask.contains(u, v) && mask(u, v);
    };
    std::deque<std::pair<int, int>> queue{{0, 0}};
    outside(0, 0) = 1;
    while (!queue.empty()) {
        const auto [x, y] = queue.front();
        queue.pop_front();
        const int nb[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        for (const auto& d : nb) {
            const int u = x + d[0], v = y + d[1];
            if (outside.contains(u, v) && !outside(u, v) && !blocked(u, v)) {
                outside(u, v) = 1;
                queue.emplace_back(u, v);
            }
        }
    }
    Mask out(mask.nx, mask.ny, 0);
    for (int j = 0; j < mask.ny; ++j)
        for (int i = 0; i < mask.nx; ++i) out(i, j) = !mask(i, j) && !outside(i + 1, j + 1);
    return out;
}

std::size_t count(const Mask& mask) {
    std::size_t n = 0;
    for (auto v : mask.data) n += v != 0;
    return n;
}

}  // namespace rfio
