#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gaga/image.hpp"

namespace gaga {

struct LossWeights {
    double lambda_p = 1.0;
    double lambda_l = 0.1;

    void validate() const;
};

struct ImageLoss {
    double value = 0.0;
    Image grad;
};

/// Mean absolute error over every channel and pixel; sign subgradient, 0 at ties.
[[nodiscard]] ImageLoss l1_image_loss(const Image& image, const Image& target);

/// Sum of mean L1 at full, 1/2, 1/4, ... resolution (2x2 average pooling).
[[nodiscard]] ImageLoss pyramid_loss(const Image& image, const Image& target, int levels = 3);

/// Exact nearest-neighbour index over 3D points. Ties resolve to the
/// smallest point index.
class KdTree {
public:
    explicit KdTree(std::span<const double> points);  // N*3

    struct Hit {
        std::size_t index = 0;
        double distance2 = 0.0;
    };

    [[nodiscard]] Hit nearest(const double* query) const;
    [[nodiscard]] std::size_t size() const noexcept { return perm_.size(); }

private:
    struct Node {
        int axis = -1;  // -1 for leaves
        double split = 0.0;
        std::uint32_t left = 0, right = 0;
        std::uint32_t begin = 0, end = 0;
    };

    std::uint32_t build(std::uint32_t begin, std::uint32_t end);
    void search(std::uint32_t node, const double* q, Hit& best) const;

    std::vector<double> points_;
    std::vector<std::uint32_t> perm_;
    std::vector<Node> nodes_;
};

struct LiftingLoss {
    double value = 0.0;
    std::vector<double> grad_positions;  // same layout as the points
    std::vector<std::size_t> matches;    // nearest point per vertex
};

/// Mean over vertices of the squared distance to the nearest lifted point.
/// The matching is held fixed for the gradient.
[[nodiscard]] LiftingLoss lifting_distance_loss(std::span<const double> vertices, std::span<const double> points);

struct LossBreakdown {
    double total = 0.0;
    double l1_coarse = 0.0;
    double l1_fine = 0.0;
    double pyramid = 0.0;  // pyramid(coarse) + pyramid(fine), unweighted
    double lifting = 0.0;  // unweighted
};

struct TotalLoss {
    LossBreakdown parts;
    Image grad_coarse;                   // same channel count as the coarse buffer
    Image grad_fine;
    std::vector<double> grad_positions;  // dual-lift positions
};

/// L1(coarse) + L1(fine) + lambda_p*(pyramid(coarse) + pyramid(fine)) +
/// lambda_l*lifting. The coarse buffer is compared through its leading three
/// (RGB) channels.
[[nodiscard]] TotalLoss total_loss(const Image& coarse, const Image& fine, const Image& target,
                                   std::span<const double> model_vertices, std::span<const double> lifted_points,
                                   const LossWeights& weights);

}  // namespace gaga
