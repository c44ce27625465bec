#include <algorithm>
#include <limits>
#include <stdexcept>

#include "gaga/losses.hpp"

namespace gaga {

namespace {
constexpr std::uint32_t kLeafSize = 8;
}

KdTree::KdTree(std::span<const double> points) : points_(points.begin(), points.end()) {
    if (points.size() % 3 != 0) throw std::invalid_argument("KdTree expects N*3 coordinates");
    const auto n = static_cast<std::uint32_t>(points.size() / 3);
    perm_.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) perm_[i] = i;
    if (n > 0) {
        nodes_.reserve(2 * (n / kLeafSize + 1));
        build(0, n);
    }
}

std::uint32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({});
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    if (end - begin <= kLeafSize) return id;

    double lo[3] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                    std::numeric_limits<double>::infinity()};
    double hi[3] = {-lo[0], -lo[1], -lo[2]};
    for (std::uint32_t i = begin; i < end; ++i)
        for (int c = 0; c < 3; ++c) {
            lo[c] = std::min(lo[c], points_[perm_[i] * 3 + c]);
            hi[c] = std::max(hi[c], points_[perm_[i] * 3 + c]);
        }
    int axis = 0;
    for (int c = 1; c < 3; ++c)
        if (hi[c] - lo[c] > hi[axis] - lo[axis]) axis = c;

    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(perm_.begin() + begin, perm_.begin() + mid, perm_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                         const double pa = points_[a * 3 + axis], pb = points_[b * 3 + axis];
                         return pa < pb || (pa == pb && a < b);
                     });
    const double split = points_[perm_[mid] * 3 + axis];
    const std::uint32_t left = build(begin, mid);
    const std::uint32_t right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

void KdTree::search(std::uint32_t node_id, const double* q, Hit& best) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
        for (std::uint32_t i = node.begin; i < node.end; ++i) {
            const std::uint32_t idx = perm_[i];
            const double* p = &points_[idx * 3];
            const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
            const double d2 = dx * dx + dy * dy + dz * dz;
            if (d2 < best.distance2 || (d2 == best.distance2 && idx < best.index)) best = {idx, d2};
        }
        return;
    }
    const double diff = q[node.axis] - node.split;
    const std::uint32_t near = diff < 0 ? node.left : node.right;
    const std::uint32_t far = diff < 0 ? node.right : node.left;
    search(near, q, best);
    if (diff * diff <= best.distance2) search(far, q, best);
}

KdTree::Hit KdTree::nearest(const double* query) const {
    if (perm_.empty()) throw std::invalid_argument("nearest-neighbour query on an empty KdTree");
    Hit best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
    search(0, query, best);
    return best;
}

}  // namespace gaga
