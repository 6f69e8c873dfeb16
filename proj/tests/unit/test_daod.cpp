#include "falce/daod.hpp"
#include "falce/error.hpp"
#include "oracles/loss_oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace falce;
using namespace falce::daod;

namespace {

constexpr double kLn2 = std::numbers::ln2;

DomainBatch random_batch(std::mt19937_64& rng, double lo = 0.02, double hi = 0.98) {
    std::uniform_real_distribution<double> p(lo, hi);
    std::uniform_int_distribution<int> count(1, 6);
    std::uniform_int_distribution<int> n_images(1, 4);
    DomainBatch b;
    const int n = n_images(rng);
    for (int i = 0; i < n; ++i) {
        DomainImage img;
        img.domain_label = i % 2;
        for (int k = count(rng); k > 0; --k) img.activations.push_back(p(rng));
        for (int k = count(rng) - 1; k > 0; --k) img.instance_probs.push_back(p(rng));
        b.images.push_back(std::move(img));
    }
    return b;
}

Proposal random_proposal(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> c(0.0, 20.0);
    std::uniform_real_distribution<double> s(0.5, 6.0);
    std::uniform_real_distribution<double> o(0.0, 1.0);
    const double x = c(rng);
    const double y = c(rng);
    return Proposal{BBox{x, y, x + s(rng), y + s(rng)}, o(rng)};
}

std::vector<DomainSample> random_samples(std::mt19937_64& rng, int n, int fdim, int ldim) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<DomainSample> out(static_cast<std::size_t>(n));
    for (auto& s : out) {
        s.feature.resize(static_cast<std::size_t>(fdim));
        s.logits.resize(static_cast<std::size_t>(ldim));
        for (auto& v : s.feature) v = g(rng);
        for (auto& v : s.logits) v = g(rng);
    }
    return out;
}

LinearDiscriminator random_discriminator(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> g(0.0, 0.5);
    LinearDiscriminator d;
    d.weights.resize(dim);
    for (auto& w : d.weights) w = g(rng);
    d.bias = g(rng);
    return d;
}

/// Checks an analytic partial against a central difference of `loss` in the value at `slot`.
void expect_fd_match(double analytic, double& slot, const std::function<double()>& loss) {
    const double x0 = slot;
    const double f0 = loss();
    const double fd = oracle::central_difference(
        [&](double v) {
            slot = v;
            return loss();
        },
        x0);
    slot = x0;
    EXPECT_TRUE(oracle::fd_agrees(analytic, fd, f0)) << "analytic " << analytic << " fd " << fd;
}

}  // namespace

// --- IoU ---------------------------------------------------------------------

TEST(Iou, Examples) {
    const BBox a{0, 0, 2, 2};
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
    EXPECT_DOUBLE_EQ(iou(a, BBox{5, 5, 6, 6}), 0.0);
    EXPECT_DOUBLE_EQ(iou(a, BBox{1, 1, 3, 3}), 1.0 / 7.0);
    EXPECT_DOUBLE_EQ(iou(a, BBox{2, 0, 4, 2}), 0.0);  // edge contact only
}

// --- PIM ---------------------------------------------------------------------

TEST(PimFilter, ThresholdOnly) {
    const std::vector<Proposal> cand = {{BBox{0, 0, 1, 1}, 0.4}, {BBox{2, 2, 3, 3}, 0.9}};
    const auto out = pim_filter(cand, {}, 0.5);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0], cand[1]);
}

TEST(PimFilter, OverlapWithAcceptedExcludes) {
    const std::vector<Proposal> acc = {{BBox{0, 0, 4, 4}, 0.95}};
    const std::vector<Proposal> cand = {{BBox{3, 3, 8, 8}, 0.99}, {BBox{10, 10, 12, 12}, 0.8}, acc[0]};
    const auto out = pim_filter(cand, acc, 0.7);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].box, (BBox{10, 10, 12, 12}));
}

TEST(PimFilter, MatchesSetBuilderOracle) {
    std::mt19937_64 rng(61);
    std::uniform_int_distribution<int> n_acc(0, 4);
    std::uniform_real_distribution<double> tau(0.0, 0.95);
    for (int t = 0; t < 300; ++t) {
        std::vector<Proposal> cand(20);
        for (auto& c : cand) c = random_proposal(rng);
        std::vector<Proposal> acc;
        for (int k = n_acc(rng); k > 0; --k) acc.push_back(random_proposal(rng));
        if (t % 5 == 0 && !acc.empty()) cand[3] = acc[0];
        const double th = tau(rng);
        EXPECT_EQ(pim_filter(cand, acc, th), oracle::pim_set_builder(cand, acc, th)) << "trial " << t;
    }
}

// --- Image / instance / consistency losses -----------------------------------

TEST(ImageDomainLoss, MaxEntropyPoint) {
    DomainBatch b;
    for (int i = 0; i < 3; ++i) b.images.push_back({std::vector<double>(4 + i, 0.5), {}, i % 2});
    EXPECT_NEAR(image_domain_loss(b), 3 * kLn2, 1e-12);
}

TEST(ImageDomainLoss, PerfectClassifierNearZero) {
    DomainBatch b;
    b.images.push_back({{0.0, 0.0}, {}, 0});
    b.images.push_back({{1.0, 1.0, 1.0}, {}, 1});
    EXPECT_LE(image_domain_loss(b), 2 * -std::log(1.0 - kProbEpsilon) + 1e-15);
}

TEST(InstanceDomainLoss, Examples) {
    DomainBatch b;
    b.images.push_back({{0.3}, {0.5, 0.5, 0.5}, 0});
    b.images.push_back({{0.6}, {0.5, 0.5}, 1});
    EXPECT_NEAR(instance_domain_loss(b), 5 * kLn2, 1e-12);
    DomainBatch p;
    p.images.push_back({{0.3}, {0.0, 0.0}, 0});
    p.images.push_back({{0.6}, {1.0}, 1});
    EXPECT_LE(instance_domain_loss(p), 3 * -std::log(1.0 - kProbEpsilon) + 1e-15);
}

TEST(ConsistencyLoss, Examples) {
    DomainBatch one;
    one.images.push_back({{0.8}, {0.6}, 0});
    EXPECT_NEAR(consistency_loss(one), 0.2, 1e-12);
    DomainBatch fixed;
    fixed.images.push_back({{0.2, 0.4}, {0.3, 0.3}, 1});
    EXPECT_NEAR(consistency_loss(fixed), 0.0, 1e-12);
}

TEST(DomainLosses, MatchDirectSummationOracle) {
    std::mt19937_64 rng(62);
    for (int t = 0; t < 200; ++t) {
        // Include exact endpoints so the clamp path is exercised.
        auto b = random_batch(rng, 0.0, 1.0);
        if (t % 4 == 0) b.images[0].activations[0] = t % 8 ? 0.0 : 1.0;
        EXPECT_NEAR(image_domain_loss(b), oracle::image_loss_direct(b), 1e-12 * std::max(1.0, image_domain_loss(b)));
        EXPECT_NEAR(instance_domain_loss(b), oracle::instance_loss_direct(b),
                    1e-12 * std::max(1.0, instance_domain_loss(b)));
        EXPECT_NEAR(consistency_loss(b), oracle::consistency_loss_direct(b), 1e-12);
    }
}

TEST(DomainLosses, FiniteAndNonNegative) {
    std::mt19937_64 rng(63);
    for (int t = 0; t < 200; ++t) {
        const auto b = random_batch(rng, 0.0, 1.0);
        for (double v : {image_domain_loss(b), instance_domain_loss(b), consistency_loss(b)}) {
            EXPECT_TRUE(std::isfinite(v));
            EXPECT_GE(v, 0.0);
        }
    }
}

TEST(DomainLosses, MinimizedAtDomainLabel) {
    std::mt19937_64 rng(64);
    std::uniform_real_distribution<double> d(0.001, 0.5);
    for (int t = 0; t < 100; ++t) {
        DomainBatch b = random_batch(rng);
        for (auto& img : b.images) {
            for (auto& a : img.activations) a = img.domain_label;
            for (auto& p : img.instance_probs) p = img.domain_label;
        }
        const double base_img = image_domain_loss(b);
        const double base_ins = instance_domain_loss(b);
        auto& img = b.images[0];
        const double step = d(rng);
        img.activations[0] = img.domain_label ? 1.0 - step : step;
        EXPECT_GT(image_domain_loss(b), base_img);
        if (!img.instance_probs.empty()) {
            img.instance_probs[0] = img.domain_label ? 1.0 - step : step;
            EXPECT_GT(instance_domain_loss(b), base_ins);
        }
    }
}

TEST(DomainLosses, ConsistencyZeroIffEqualToMean) {
    std::mt19937_64 rng(65);
    for (int t = 0; t < 100; ++t) {
        DomainBatch b = random_batch(rng);
        for (auto& img : b.images) {
            double m = 0.0;
            for (double a : img.activations) m += a;
            m /= static_cast<double>(img.activations.size());
            for (auto& p : img.instance_probs) p = m;
        }
        EXPECT_NEAR(consistency_loss(b), 0.0, 1e-12);
        for (auto& img : b.images) {
            if (img.instance_probs.empty()) continue;
            img.instance_probs[0] += img.instance_probs[0] > 0.5 ? -1e-3 : 1e-3;
            EXPECT_GT(consistency_loss(b), 1e-12);
            break;
        }
    }
}

TEST(DomainBatch, Validation) {
    DomainBatch b;
    b.images.push_back({{}, {}, 0});
    EXPECT_THROW(b.validate(), InvalidArgument);
    b.images[0] = {{0.5}, {}, 2};
    EXPECT_THROW(image_domain_loss(b), InvalidArgument);
    b.images[0] = {{0.5}, {1.5}, 1};
    EXPECT_THROW(instance_domain_loss(b), InvalidArgument);
    b.images[0] = {{std::nan("")}, {}, 1};
    EXPECT_THROW(consistency_loss(b), InvalidArgument);
}

// --- Gradients -----------------------------------------------------------------

TEST(Gradients, ImageLossClosedForm) {
    DomainBatch b;
    b.images.push_back({{0.3, 0.6, 0.9}, {}, 1});
    const auto g = image_domain_loss_grad(b);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(g.activations[0][k], -1.0 / (b.images[0].activations[k] * 3), 1e-12);
}

TEST(Gradients, ConsistencySignAndTie) {
    DomainBatch b;
    b.images.push_back({{0.4, 0.6}, {0.7, 0.2, 0.5}, 0});
    const auto g = consistency_loss_grad(b);
    EXPECT_EQ(g.instance_probs[0][0], 1.0);
    EXPECT_EQ(g.instance_probs[0][1], -1.0);
    EXPECT_EQ(g.instance_probs[0][2], 0.0);
}

TEST(Gradients, DomainLossesMatchFiniteDifferences) {
    std::mt19937_64 rng(66);
    for (int t = 0; t < 200; ++t) {
        DomainBatch b = random_batch(rng);
        const auto gi = image_domain_loss_grad(b);
        const auto gn = instance_domain_loss_grad(b);
        const auto gc = consistency_loss_grad(b);
        for (std::size_t i = 0; i < b.images.size(); ++i) {
            auto& img = b.images[i];
            for (std::size_t k = 0; k < img.activations.size(); ++k) {
                expect_fd_match(gi.activations[i][k], img.activations[k], [&] { return image_domain_loss(b); });
                EXPECT_EQ(gn.activations[i][k], 0.0);
            }
            double mean = 0.0;
            for (double a : img.activations) mean += a;
            mean /= static_cast<double>(img.activations.size());
            bool near_tie = false;
            for (double p : img.instance_probs) near_tie = near_tie || std::fabs(p - mean) < 1e-3;
            for (std::size_t j = 0; j < img.instance_probs.size(); ++j) {
                expect_fd_match(gn.instance_probs[i][j], img.instance_probs[j], [&] { return instance_domain_loss(b); });
                if (std::fabs(img.instance_probs[j] - mean) > 1e-3) {
                    expect_fd_match(gc.instance_probs[i][j], img.instance_probs[j], [&] { return consistency_loss(b); });
                }
            }
            if (!near_tie) {
                for (std::size_t k = 0; k < img.activations.size(); ++k) {
                    expect_fd_match(gc.activations[i][k], img.activations[k], [&] { return consistency_loss(b); });
                }
            }
        }
    }
}

TEST(Gradients, ZeroInsideClampRegion) {
    DomainBatch b;
    b.images.push_back({{0.0, 0.5}, {1.0}, 1});
    const auto g = image_domain_loss_grad(b);
    EXPECT_EQ(g.activations[0][0], 0.0);
    EXPECT_EQ(instance_domain_loss_grad(b).instance_probs[0][0], 0.0);
}

// --- Relation matrices ------------------------------------------------------

TEST(RelationMatrix, Validation) {
    EXPECT_NO_THROW(RelationMatrix(2, {0.5, 0.5, 0.1, 0.9}));
    EXPECT_THROW(RelationMatrix(2, {0.5, 0.6, 0.1, 0.9}), InvalidArgument);
    EXPECT_THROW(RelationMatrix(2, {1.5, -0.5, 0.1, 0.9}), InvalidArgument);
    EXPECT_THROW(RelationMatrix(2, {1.0, 0.0, 1.0}), DimensionMismatch);
    EXPECT_THROW(RelationMatrix(0, {}), InvalidArgument);
    EXPECT_EQ(RelationMatrix::uniform(4).at(2, 3), 0.25);
}

TEST(BuildRelationMatrix, Singleton) {
    const std::vector<ClassFeature> f = {{{1.0, 2.0}, 0}, {{3.0, -1.0}, 0}};
    const auto m = build_relation_matrix(f, 1);
    EXPECT_EQ(m.entries(), std::vector<double>{1.0});
}

TEST(BuildRelationMatrix, OrthogonalPrototypesClosedForm) {
    const std::vector<ClassFeature> f = {{{1.0, 0.0}, 0}, {{0.0, 2.0}, 1}, {{0.0, 4.0}, 1}};
    const auto m = build_relation_matrix(f, 2);
    const double e = std::exp(1.0);
    EXPECT_NEAR(m.at(0, 0), e / (e + 1), 1e-15);
    EXPECT_NEAR(m.at(0, 1), 1 / (e + 1), 1e-15);
    EXPECT_NEAR(m.at(1, 0), 1 / (e + 1), 1e-15);
    EXPECT_NEAR(m.at(1, 1), e / (e + 1), 1e-15);
}

TEST(BuildRelationMatrix, IdenticalPrototypesUniform) {
    const std::vector<ClassFeature> f = {{{1.0, 1.0, 0.5}, 0}, {{2.0, 2.0, 1.0}, 1}, {{0.5, 0.5, 0.25}, 2}};
    const auto m = build_relation_matrix(f, 3);
    for (double v : m.entries()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(BuildRelationMatrix, AbsentClassRowUniformAndRowsStochastic) {
    std::mt19937_64 rng(67);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> cls(0, 3);
    for (int t = 0; t < 100; ++t) {
        std::vector<ClassFeature> f(10);
        for (auto& c : f) {
            c.feature = {g(rng), g(rng), g(rng)};
            c.label = t % 2 ? cls(rng) % 3 : cls(rng);  // odd trials never see class 3
        }
        const auto m = build_relation_matrix(f, 4);
        for (int r = 0; r < 4; ++r) {
            double s = 0.0;
            for (int c = 0; c < 4; ++c) s += m.at(r, c);
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
        if (t % 2) {
            for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(m.at(3, c), 0.25);
        }
    }
    const std::vector<ClassFeature> bad = {{{1.0}, 5}};
    EXPECT_THROW(build_relation_matrix(bad, 2), InvalidArgument);
}

TEST(UpdateGrm, Examples) {
    const RelationMatrix g(2, {0.9, 0.1, 0.2, 0.8});
    const RelationMatrix l(2, {0.5, 0.5, 0.6, 0.4});
    EXPECT_EQ(update_grm(g, l, 0.0).entries(), l.entries());
    const auto near_one = update_grm(g, l, 0.999999);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(near_one.entries()[i], g.entries()[i], 1e-5);
    const auto half = update_grm(g, l, 0.5);
    const std::vector<double> want = {0.7, 0.3, 0.4, 0.6};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(half.entries()[i], want[i], 1e-15);
    EXPECT_THROW(update_grm(g, l, 1.0), InvalidArgument);
    EXPECT_THROW(update_grm(g, RelationMatrix::uniform(3), 0.5), DimensionMismatch);
}

TEST(MgrmLoss, Examples) {
    const auto one = RelationMatrix::uniform(1);
    EXPECT_EQ(mgrm_loss(one, one, {0}), 0.0);
    const RelationMatrix l(2, {1, 0, 0, 1});
    const auto g = RelationMatrix::uniform(2);
    EXPECT_DOUBLE_EQ(mgrm_loss(l, g, {0, 1}), 1.0);
    EXPECT_DOUBLE_EQ(mgrm_loss(l, l, {0, 1}), 0.0);
    EXPECT_THROW(mgrm_loss(l, g, {}), InvalidArgument);
    EXPECT_THROW(mgrm_loss(l, g, {2}), InvalidArgument);
}

TEST(MgrmLoss, OracleSymmetryAndZero) {
    std::mt19937_64 rng(68);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    const auto random_rm = [&](int n) {
        std::vector<double> e(static_cast<std::size_t>(n * n));
        for (int r = 0; r < n; ++r) {
            double s = 0.0;
            for (int c = 0; c < n; ++c) s += e[r * n + c] = u(rng);
            for (int c = 0; c < n; ++c) e[r * n + c] /= s;
        }
        return RelationMatrix(n, e);
    };
    for (int t = 0; t < 100; ++t) {
        const int n = 2 + t % 4;
        const auto a = random_rm(n);
        const auto b = random_rm(n);
        std::set<int> present;
        for (int r = 0; r < n; ++r) {
            if (u(rng) < 0.6 || present.empty()) present.insert(r);
        }
        const std::vector<int> pv(present.begin(), present.end());
        EXPECT_NEAR(mgrm_loss(a, b, present), oracle::mgrm_loss_direct(a, b, pv), 1e-12);
        EXPECT_EQ(mgrm_loss(a, b, present), mgrm_loss(b, a, present));
        EXPECT_EQ(mgrm_loss(a, a, present), 0.0);
        const auto u2 = update_grm(a, b, 0.3);
        for (int r = 0; r < n; ++r) {
            double s = 0.0;
            for (int c = 0; c < n; ++c) s += u2.at(r, c);
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
}

// --- Discriminator ------------------------------------------------------------

TEST(EagrDiscLoss, HalfEverywhere) {
    std::mt19937_64 rng(69);
    const auto src = random_samples(rng, 3, 4, 2);
    const auto tgt = random_samples(rng, 5, 4, 2);
    const LinearDiscriminator zero{std::vector<double>(6, 0.0), 0.0};
    EXPECT_NEAR(eagr_disc_loss(src, tgt, zero), 8 * kLn2, 1e-12);
}

TEST(EagrDiscLoss, MatchesConcatenationOracle) {
    std::mt19937_64 rng(70);
    for (int t = 0; t < 200; ++t) {
        const int fdim = 1 + t % 5;
        const int ldim = t % 4;
        const auto src = random_samples(rng, 1 + t % 3, fdim, ldim);
        const auto tgt = random_samples(rng, 1 + t % 4, fdim, ldim);
        const auto d = random_discriminator(rng, static_cast<std::size_t>(fdim + ldim));
        const double got = eagr_disc_loss(src, tgt, d);
        EXPECT_NEAR(got, oracle::eagr_loss_direct(src, tgt, d), 1e-12 * std::max(1.0, got));
        EXPECT_GE(got, 0.0);
    }
}

TEST(EagrDiscLoss, Errors) {
    std::mt19937_64 rng(71);
    const auto src = random_samples(rng, 2, 3, 1);
    const LinearDiscriminator d{std::vector<double>(4, 0.1), 0.0};
    EXPECT_THROW(eagr_disc_loss(src, {}, d), InvalidArgument);
    EXPECT_THROW(eagr_disc_loss({}, src, d), InvalidArgument);
    const LinearDiscriminator wrong{std::vector<double>(3, 0.1), 0.0};
    EXPECT_THROW(eagr_disc_loss(src, src, wrong), DimensionMismatch);
}

TEST(EagrDiscLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(72);
    for (int t = 0; t < 200; ++t) {
        const int fdim = 1 + t % 4;
        const int ldim = t % 3;
        auto src = random_samples(rng, 1 + t % 3, fdim, ldim);
        auto tgt = random_samples(rng, 1 + t % 2, fdim, ldim);
        auto d = random_discriminator(rng, static_cast<std::size_t>(fdim + ldim));
        const auto g = eagr_disc_loss_grad(src, tgt, d);
        const auto loss = [&] { return eagr_disc_loss(src, tgt, d); };
        for (std::size_t k = 0; k < d.weights.size(); ++k) expect_fd_match(g.weights[k], d.weights[k], loss);
        expect_fd_match(g.bias, d.bias, loss);
        for (std::size_t i = 0; i < src.size(); ++i) {
            for (int k = 0; k < fdim; ++k) expect_fd_match(g.source_inputs[i][k], src[i].feature[k], loss);
            for (int k = 0; k < ldim; ++k) expect_fd_match(g.source_inputs[i][fdim + k], src[i].logits[k], loss);
        }
        for (std::size_t i = 0; i < tgt.size(); ++i) {
            for (int k = 0; k < fdim; ++k) expect_fd_match(g.target_inputs[i][k], tgt[i].feature[k], loss);
        }
    }
}

// --- Total objective --------------------------------------------------------------

TEST(TotalLoss, Examples) {
    const std::vector<double> dis = {0.5, 0.5};
    EXPECT_DOUBLE_EQ(total_loss(1.0, dis, 2.0, 0.25, 0.1, 0.1), 1.55);
    EXPECT_DOUBLE_EQ(total_loss(1.0, dis, 2.0, 0.25, 0.0, 0.0), 1.25);
    EXPECT_EQ(total_loss(0.0, std::vector<double>{0.0, 0.0}, 0.0, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(total_loss(1.0, dis, 2.0, 0.25), 1.55);
}
