/**
 * @file daod.hpp
 * @brief Loss kernels for domain-adaptive detection
 *
 * Covers proposal mining, image/instance-level domain classification losses,
 * the image/instance consistency regularizer, class-relation matrices with
 * their L1 alignment loss, the feature-plus-logit discriminator loss and the
 * weighted total objective, together with analytic gradients.
 *
 * All probabilities are clamped to [kProbEpsilon, 1 - kProbEpsilon] before use.
 */
#pragma once

#include "falce/geometry.hpp"

#include <set>
#include <span>
#include <vector>

namespace falce::daod {

inline constexpr double kProbEpsilon = 1e-7;
inline constexpr double kDefaultPimThreshold = 0.7;
inline constexpr double kDefaultLambda1 = 0.1;
inline constexpr double kDefaultLambda2 = 0.1;

double clamp_prob(double p) noexcept;

double sigmoid(double s) noexcept;

/// Intersection over union; 0 for disjoint or degenerate boxes.
double iou(const BBox& a, const BBox& b) noexcept;

// =============================================================================
// Potential instance mining
// =============================================================================

struct Proposal {
    BBox box;
    double objectness = 0.0;

    friend bool operator==(const Proposal&, const Proposal&) = default;
};

/// Candidates scoring above tau that are not already accepted and overlap no
/// accepted proposal at all. Input order is preserved.
std::vector<Proposal> pim_filter(std::span<const Proposal> candidates, std::span<const Proposal> accepted,
                                 double tau = kDefaultPimThreshold);

// =============================================================================
// Image / instance domain classification
// =============================================================================

struct DomainImage {
    std::vector<double> activations;     // image-level classifier map, values in (0, 1)
    std::vector<double> instance_probs;  // one per region proposal
    int domain_label = 0;                // 0 source, 1 target
};

struct DomainBatch {
    std::vector<DomainImage> images;

    /// Throws InvalidArgument on an empty activation map, a label outside {0,1}
    /// or a probability outside [0, 1].
    void validate() const;
};

/// -sum_i mean_k [D_i log a_ik + (1 - D_i) log(1 - a_ik)]
double image_domain_loss(const DomainBatch& batch);

/// -sum_{i,j} [D_i log p_ij + (1 - D_i) log(1 - p_ij)]
double instance_domain_loss(const DomainBatch& batch);

/// sum_{i,j} |mean_k a_ik - p_ij|
double consistency_loss(const DomainBatch& batch);

/// Partial derivatives with the same nesting as the batch.
struct DomainBatchGradient {
    std::vector<std::vector<double>> activations;
    std::vector<std::vector<double>> instance_probs;
};

DomainBatchGradient image_domain_loss_grad(const DomainBatch& batch);
DomainBatchGradient instance_domain_loss_grad(const DomainBatch& batch);

/// Subgradient; terms with p_ij exactly equal to the image mean contribute 0.
DomainBatchGradient consistency_loss_grad(const DomainBatch& batch);

// =============================================================================
// Class relation matrices
// =============================================================================

/// Square row-stochastic matrix of class-to-class transition probabilities.
class RelationMatrix {
public:
    /// Throws InvalidArgument unless entries are finite, non-negative and every
    /// row sums to 1 within 1e-9.
    RelationMatrix(int size, std::vector<double> entries);

    static RelationMatrix uniform(int size);

    int size() const noexcept { return size_; }
    double at(int r, int c) const { return entries_[static_cast<std::size_t>(r) * size_ + c]; }
    const std::vector<double>& entries() const noexcept { return entries_; }

private:
    int size_;
    std::vector<double> entries_;
};

struct ClassFeature {
    std::vector<double> feature;
    int label = 0;
};

/// Prototype scheme: per-class mean vectors; entry (r, c) is the softmax over c of
/// the cosine similarity between prototypes r and c. Absent classes contribute a
/// similarity of 0 and their own rows are uniform.
RelationMatrix build_relation_matrix(std::span<const ClassFeature> features, int num_classes);

/// Exponential moving average momentum * grm + (1 - momentum) * lrm, rows renormalized.
RelationMatrix update_grm(const RelationMatrix& grm, const RelationMatrix& lrm, double momentum);

/// (1 / |present|) sum_{r in present} sum_c |lrm(r, c) - grm(r, c)|
double mgrm_loss(const RelationMatrix& lrm, const RelationMatrix& grm, const std::set<int>& present);

// =============================================================================
// Feature/logit discriminator
// =============================================================================

/// Discriminator input: a feature vector concatenated with class logits (possibly empty).
struct DomainSample {
    std::vector<double> feature;
    std::vector<double> logits;

    std::size_t dim() const noexcept { return feature.size() + logits.size(); }
};

/// Logistic linear map over the concatenated input; output is P(source).
struct LinearDiscriminator {
    std::vector<double> weights;
    double bias = 0.0;

    double score(const DomainSample& s) const;  // pre-sigmoid
    double prob(const DomainSample& s) const { return sigmoid(score(s)); }
};

/// Binary cross-entropy with source label 1 and target label 0, summed over samples.
/// Both lists must be non-empty.
double eagr_disc_loss(std::span<const DomainSample> src, std::span<const DomainSample> tgt,
                      const LinearDiscriminator& dis);

struct DiscriminatorGradient {
    std::vector<double> weights;
    double bias = 0.0;
    std::vector<std::vector<double>> source_inputs;  // d loss / d (feature ++ logits)
    std::vector<std::vector<double>> target_inputs;
};

DiscriminatorGradient eagr_disc_loss_grad(std::span<const DomainSample> src, std::span<const DomainSample> tgt,
                                          const LinearDiscriminator& dis);

// =============================================================================
// Total objective
// =============================================================================

/// l_det + lambda1 * sum(dis_losses) + lambda2 * l_mgrm + l_eagr
double total_loss(double l_det, std::span<const double> dis_losses, double l_mgrm, double l_eagr,
                  double lambda1 = kDefaultLambda1, double lambda2 = kDefaultLambda2);

}  // namespace falce::daod
