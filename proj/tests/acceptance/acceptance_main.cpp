/**
 * @file acceptance_main.cpp
 * @brief Acceptance harness: one [PASS]/[FAIL] line per criterion, nonzero exit on any failure
 */

#include "falce/daod.hpp"
#include "falce/enhance.hpp"
#include "falce/evalkit.hpp"
#include "falce/pipeline.hpp"
#include "falce/segment.hpp"
#include "falce/spectral.hpp"
#include "falce/toy_adapt.hpp"
#include "oracles/ap_oracle.hpp"
#include "oracles/dft_oracle.hpp"
#include "oracles/loss_oracle.hpp"
#include "oracles/morphology_oracle.hpp"
#include "oracles/otsu_oracle.hpp"
#include "support/test_data.hpp"

#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <string>

using namespace falce;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

/// Records the first failing observation; later checks keep running.
struct Check {
    Outcome o;
    void expect(bool ok, const std::string& what) {
        if (!ok && o.pass) {
            o.pass = false;
            o.detail = what;
        }
    }
};

int g_failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.pass && secs > budget_s) {
        o = {false, "runtime " + std::to_string(secs) + " s exceeds budget " + std::to_string(budget_s) + " s"};
    }
    std::printf("[%s] %s (%.2f s)%s%s\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs, o.detail.empty() ? "" : " - ",
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++g_failures;
}

/// Shortest round-trip representation.
std::string fmt_double(double v) {
    std::array<char, 32> buf{};
    const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), r.ptr);
}

// -----------------------------------------------------------------------------

Outcome fda_self_transfer() {
    Check c;
    std::mt19937_64 rng(1001);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const auto img = fixtures::random_image(64, 64, rng);
        for (double beta : {0.01, 0.1, 0.5, 1.0}) {
            const auto out = spectral::fda_transfer_unclamped(img, img, beta);
            for (std::size_t i = 0; i < img.size(); ++i) worst = std::max(worst, std::abs(out.values[i] - img.pixels()[i]));
        }
    }
    c.expect(worst < 1e-6, "max deviation " + fmt_double(worst));
    return c.o;
}

Outcome fft_correctness() {
    Check c;
    std::mt19937_64 rng(1002);
    for (int h = 1; h <= 16; ++h) {
        for (int w = 1; w <= 16; ++w) {
            const auto img = fixtures::random_image(w, h, rng);
            const auto got = spectral::fft2(img);
            const auto want = oracle::naive_dft(img);
            for (std::size_t i = 0; i < want.size(); ++i) {
                c.expect(std::abs(got.coeffs[i] - want[i]) < 1e-9,
                         "size " + std::to_string(w) + "x" + std::to_string(h) + " coefficient " + std::to_string(i));
            }
        }
    }
    std::uniform_int_distribution<int> dim(1, 64);
    for (int t = 0; t < 1000; ++t) {
        const auto img = fixtures::random_image(dim(rng), dim(rng), rng);
        const auto spec = spectral::fft2(img);
        long double energy = 0.0L;
        for (double v : img.pixels()) energy += static_cast<long double>(v) * v;
        long double freq = 0.0L;
        for (const auto& z : spec.coeffs) freq += std::norm(std::complex<long double>(z.real(), z.imag()));
        freq /= static_cast<long double>(img.size());
        const double rel = static_cast<double>(std::fabs(freq - energy) / std::max(energy, 1e-300L));
        c.expect(rel < 1e-9, "Parseval relative error " + fmt_double(rel) + " on trial " + std::to_string(t));
    }
    return c.o;
}

Outcome clahe_degenerate() {
    Check c;
    std::mt19937_64 rng(1003);
    std::uniform_int_distribution<int> dim(8, 96);
    enhance::ClaheParams global;
    global.tiles_x = global.tiles_y = 1;
    global.clip_limit = enhance::ClaheParams::kUnlimited;
    for (int t = 0; t < 100; ++t) {
        const auto img = t % 2 ? fixtures::random_image(dim(rng), dim(rng), rng)
                               : fixtures::random_level_image(dim(rng), dim(rng), 2 + t, rng);
        c.expect(enhance::clahe(img, global) == enhance::equalize_hist(img),
                 "1x1 unlimited CLAHE differs from equalize_hist on trial " + std::to_string(t));

        enhance::ClaheParams p;
        p.tiles_x = 1 + t % 8;
        p.tiles_y = 1 + (t / 8) % 8;
        p.clip_limit = 1.0 + 0.25 * (t % 13);
        for (const auto& th : enhance::tile_histograms(img, p)) {
            const auto raw = std::accumulate(th.raw.begin(), th.raw.end(), std::uint64_t{0});
            const auto clipped = std::accumulate(th.clipped.begin(), th.clipped.end(), std::uint64_t{0});
            c.expect(raw == th.pixels && clipped == th.pixels,
                     "clip conservation broken on trial " + std::to_string(t));
        }
    }
    return c.o;
}

Outcome otsu_oracle() {
    Check c;
    std::mt19937_64 rng(1004);
    std::uniform_int_distribution<int> dim(4, 24);
    std::uniform_int_distribution<int> levels(2, 64);
    int compared = 0;
    while (compared < 1000) {
        const auto img = compared % 2 ? fixtures::random_image(dim(rng), dim(rng), rng)
                                      : fixtures::random_level_image(dim(rng), dim(rng), levels(rng), rng);
        const auto want = oracle::otsu_exhaustive(img);
        if (!want) continue;
        const double got = segment::otsu_threshold(img);
        c.expect(got == *want, "trial " + std::to_string(compared) + ": got " + fmt_double(got) + " want " +
                                   fmt_double(*want));
        ++compared;
    }
    return c.o;
}

Outcome morphology() {
    Check c;
    std::mt19937_64 rng(1005);
    std::uniform_real_distribution<double> density(0.3, 0.9);
    for (int t = 0; t < 1000; ++t) {
        const auto m = fixtures::random_mask(32, 32, density(rng), rng);
        const segment::StructElem se{t % 2 ? segment::ElementShape::Disk : segment::ElementShape::Square, 1 + t % 3};
        const auto o = segment::opening(m, se);
        c.expect(segment::opening(o, se) == o, "idempotence fails on trial " + std::to_string(t));
        c.expect(o.subset_of(m), "anti-extensivity fails on trial " + std::to_string(t));
        if (t < 100) c.expect(o == oracle::opening_by_translates(m, se), "oracle mismatch on trial " + std::to_string(t));
    }
    return c.o;
}

daod::DomainBatch random_batch(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> p(lo, hi);
    std::uniform_int_distribution<int> count(1, 8);
    std::uniform_int_distribution<int> n_images(1, 5);
    daod::DomainBatch b;
    for (int i = n_images(rng); i > 0; --i) {
        daod::DomainImage img;
        img.domain_label = i % 2;
        for (int k = count(rng); k > 0; --k) img.activations.push_back(p(rng));
        for (int k = count(rng) - 1; k > 0; --k) img.instance_probs.push_back(p(rng));
        b.images.push_back(std::move(img));
    }
    return b;
}

daod::RelationMatrix random_relation(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(0.01, 1.0);
    std::vector<double> e(static_cast<std::size_t>(n * n));
    for (int r = 0; r < n; ++r) {
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += e[r * n + k] = u(rng);
        for (int k = 0; k < n; ++k) e[r * n + k] /= s;
    }
    return daod::RelationMatrix(n, e);
}

std::vector<daod::DomainSample> random_samples(std::mt19937_64& rng, int n, int fdim, int ldim) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<daod::DomainSample> out(static_cast<std::size_t>(n));
    for (auto& s : out) {
        for (int k = 0; k < fdim; ++k) s.feature.push_back(g(rng));
        for (int k = 0; k < ldim; ++k) s.logits.push_back(g(rng));
    }
    return out;
}

Outcome loss_kernels() {
    Check c;
    std::mt19937_64 rng(1006);
    const auto close = [](double a, double b) { return std::fabs(a - b) <= 1e-12 * std::max(1.0, std::fabs(b)); };
    for (int t = 0; t < 500; ++t) {
        const auto b = random_batch(rng, 0.0, 1.0);
        const auto tag = " on batch " + std::to_string(t);
        c.expect(close(daod::image_domain_loss(b), oracle::image_loss_direct(b)), "image loss" + tag);
        c.expect(close(daod::instance_domain_loss(b), oracle::instance_loss_direct(b)), "instance loss" + tag);
        c.expect(close(daod::consistency_loss(b), oracle::consistency_loss_direct(b)), "consistency loss" + tag);

        const int n = 1 + t % 5;
        const auto l = random_relation(rng, n);
        const auto g = random_relation(rng, n);
        std::set<int> present;
        for (int r = 0; r < n; ++r) {
            if (rng() % 3 || present.empty()) present.insert(r);
        }
        c.expect(close(daod::mgrm_loss(l, g, present),
                       oracle::mgrm_loss_direct(l, g, std::vector<int>(present.begin(), present.end()))),
                 "mgrm loss" + tag);

        const int fdim = 1 + t % 6;
        const int ldim = t % 5;
        const auto src = random_samples(rng, 1 + t % 4, fdim, ldim);
        const auto tgt = random_samples(rng, 1 + t % 3, fdim, ldim);
        daod::LinearDiscriminator d;
        std::normal_distribution<double> w(0.0, 0.5);
        for (int k = 0; k < fdim + ldim; ++k) d.weights.push_back(w(rng));
        d.bias = w(rng);
        c.expect(close(daod::eagr_disc_loss(src, tgt, d), oracle::eagr_loss_direct(src, tgt, d)), "eagr loss" + tag);
    }

    // Gradients against central differences.
    const auto fd_ok = [&](double analytic, double& slot, const std::function<double()>& f, const std::string& what) {
        const double x0 = slot;
        const double f0 = f();
        const double fd = oracle::central_difference(
            [&](double v) {
                slot = v;
                return f();
            },
            x0);
        slot = x0;
        c.expect(oracle::fd_agrees(analytic, fd, f0),
                 what + ": analytic " + fmt_double(analytic) + " fd " + fmt_double(fd));
    };
    for (int t = 0; t < 200; ++t) {
        auto b = random_batch(rng, 0.02, 0.98);
        const auto gi = daod::image_domain_loss_grad(b);
        const auto gn = daod::instance_domain_loss_grad(b);
        const auto gc = daod::consistency_loss_grad(b);
        const auto tag = " instance " + std::to_string(t);
        for (std::size_t i = 0; i < b.images.size(); ++i) {
            auto& img = b.images[i];
            const double mean = std::accumulate(img.activations.begin(), img.activations.end(), 0.0) /
                                static_cast<double>(img.activations.size());
            bool tie = false;
            for (double p : img.instance_probs) tie = tie || std::fabs(p - mean) < 1e-3;
            for (std::size_t k = 0; k < img.activations.size(); ++k) {
                fd_ok(gi.activations[i][k], img.activations[k], [&] { return daod::image_domain_loss(b); },
                      "image grad" + tag);
                if (!tie) {
                    fd_ok(gc.activations[i][k], img.activations[k], [&] { return daod::consistency_loss(b); },
                          "consistency grad (activation)" + tag);
                }
            }
            for (std::size_t j = 0; j < img.instance_probs.size(); ++j) {
                fd_ok(gn.instance_probs[i][j], img.instance_probs[j], [&] { return daod::instance_domain_loss(b); },
                      "instance grad" + tag);
                if (std::fabs(img.instance_probs[j] - mean) >= 1e-3) {
                    fd_ok(gc.instance_probs[i][j], img.instance_probs[j], [&] { return daod::consistency_loss(b); },
                          "consistency grad (instance)" + tag);
                }
            }
        }
        const int fdim = 1 + t % 4;
        const int ldim = t % 3;
        auto src = random_samples(rng, 1 + t % 3, fdim, ldim);
        auto tgt = random_samples(rng, 1 + t % 2, fdim, ldim);
        daod::LinearDiscriminator d;
        std::normal_distribution<double> w(0.0, 0.5);
        for (int k = 0; k < fdim + ldim; ++k) d.weights.push_back(w(rng));
        d.bias = w(rng);
        const auto g = daod::eagr_disc_loss_grad(src, tgt, d);
        const auto loss = [&] { return daod::eagr_disc_loss(src, tgt, d); };
        for (std::size_t k = 0; k < d.weights.size(); ++k) fd_ok(g.weights[k], d.weights[k], loss, "eagr weight grad" + tag);
        fd_ok(g.bias, d.bias, loss, "eagr bias grad" + tag);
        for (std::size_t i = 0; i < src.size(); ++i) {
            for (int k = 0; k < fdim; ++k) fd_ok(g.source_inputs[i][k], src[i].feature[k], loss, "eagr input grad" + tag);
            for (int k = 0; k < ldim; ++k) fd_ok(g.source_inputs[i][fdim + k], src[i].logits[k], loss, "eagr logit grad" + tag);
        }
        for (std::size_t i = 0; i < tgt.size(); ++i) {
            for (int k = 0; k < fdim; ++k) fd_ok(g.target_inputs[i][k], tgt[i].feature[k], loss, "eagr input grad" + tag);
        }
    }
    return c.o;
}

Outcome pim() {
    Check c;
    std::mt19937_64 rng(1007);
    std::uniform_real_distribution<double> pos(0.0, 40.0);
    std::uniform_real_distribution<double> size(0.5, 8.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> n_cand(0, 50);
    std::uniform_int_distribution<int> n_acc(0, 6);
    const auto proposal = [&] {
        const double x = pos(rng);
        const double y = pos(rng);
        return daod::Proposal{BBox{x, y, x + size(rng), y + size(rng)}, unit(rng)};
    };
    for (int t = 0; t < 1000; ++t) {
        std::vector<daod::Proposal> cand(static_cast<std::size_t>(n_cand(rng)));
        for (auto& p : cand) p = proposal();
        std::vector<daod::Proposal> acc(static_cast<std::size_t>(n_acc(rng)));
        for (auto& p : acc) p = proposal();
        if (!acc.empty() && !cand.empty() && t % 4 == 0) cand.front() = acc.front();
        const double tau = unit(rng);
        c.expect(daod::pim_filter(cand, acc, tau) == oracle::pim_set_builder(cand, acc, tau),
                 "mismatch on instance " + std::to_string(t));
    }
    return c.o;
}

Outcome toy_minmax() {
    Check c;
    daod::GaussianDomainSpec spec;  // means (+-1, 0), target shifted by (2, 2)
    daod::ToyAdaptConfig cfg;
    cfg.seed = 7;
    cfg.steps = 2000;
    cfg.lr = 0.05;
    cfg.lambda1 = 0.1;
    const auto adv = daod::run_toy_demo(spec, cfg);
    const auto& last = adv.history.back();
    c.expect(std::fabs(last.disc_acc - 0.5) <= 0.1, "adversarial disc acc " + fmt_double(last.disc_acc));
    c.expect(last.class_acc >= 0.9, "source class acc " + fmt_double(last.class_acc));
    cfg.lambda1 = 0.0;
    const auto plain = daod::run_toy_demo(spec, cfg);
    c.expect(plain.history.back().disc_acc > 0.9, "no-adversary disc acc " + fmt_double(plain.history.back().disc_acc));
    if (c.o.pass) {
        c.o.detail = "disc_acc " + fmt_double(last.disc_acc) + ", class_acc " + fmt_double(last.class_acc) +
                     ", lambda1=0 disc_acc " + fmt_double(plain.history.back().disc_acc);
    }
    return c.o;
}

Outcome map_evaluator() {
    Check c;
    std::mt19937_64 rng(1008);
    std::uniform_int_distribution<int> n(1, 5);
    std::uniform_int_distribution<int> cls(0, 3);
    std::uniform_int_distribution<int> img(0, 1);
    std::uniform_int_distribution<int> score(1, 8);
    std::uniform_real_distribution<double> pos(0.0, 10.0);
    std::uniform_real_distribution<double> size(1.0, 5.0);
    std::uniform_real_distribution<double> jit(-0.8, 0.8);
    const auto box = [&] {
        const double x = pos(rng);
        const double y = pos(rng);
        return BBox{x, y, x + size(rng), y + size(rng)};
    };
    for (int t = 0; t < 100; ++t) {
        std::vector<evalkit::GroundTruth> gts;
        std::vector<evalkit::Detection> dets;
        for (int k = n(rng); k > 0; --k) gts.push_back({img(rng) ? "a" : "b", cls(rng), box()});
        for (int k = n(rng); k > 0; --k) {
            if (rng() % 2) {
                const auto& g = gts[rng() % gts.size()];
                dets.push_back({g.image_id, g.class_id,
                                BBox{g.box.x1 + jit(rng), g.box.y1 + jit(rng), g.box.x2 + jit(rng), g.box.y2 + jit(rng)},
                                score(rng) / 8.0});
            } else {
                dets.push_back({img(rng) ? "a" : "b", cls(rng), box(), score(rng) / 8.0});
            }
        }
        std::set<int> present;
        for (const auto& g : gts) present.insert(g.class_id);
        double want = 0.0;
        for (int k : present) want += oracle::brute_force_ap(dets, gts, k, 0.5);
        want /= static_cast<double>(present.size());
        const double got = evalkit::mean_ap(dets, gts, 4);
        c.expect(std::fabs(got - want) <= 1e-9,
                 "instance " + std::to_string(t) + ": got " + fmt_double(got) + " want " + fmt_double(want));
    }
    std::vector<evalkit::GroundTruth> gts;
    std::vector<evalkit::Detection> perfect;
    for (int k = 0; k < 4; ++k) {
        gts.push_back({"x", k, BBox{10.0 * k, 0, 10.0 * k + 6, 6}});
        perfect.push_back({"x", k, gts.back().box, 0.9});
    }
    c.expect(evalkit::mean_ap(perfect, gts, 4) == 1.0, "perfect fixture is not 1.0");
    c.expect(evalkit::mean_ap({}, gts, 4) == 0.0, "empty fixture is not 0.0");
    return c.o;
}

Outcome split_protocol() {
    Check c;
    using evalkit::Density;
    std::vector<evalkit::ManifestRecord> m;
    const std::vector<std::vector<std::string>> strata = {{}, {"Mass"}, {"Suspicious Calcification", "Mass"}};
    int id = 0;
    for (Density d : {Density::A, Density::B, Density::C, Density::D}) {
        for (const auto& labels : strata) {
            for (int k = 0; k < 10; ++k) {
                evalkit::ManifestRecord r{std::to_string(id++), "x.png", d, {}};
                for (const auto& l : labels) r.raw_findings.push_back({l, BBox{0, 0, 1, 1}});
                m.push_back(r);
            }
        }
    }
    const auto s = evalkit::split_by_density(m);
    for (const auto& r : s.denb) c.expect(r.density == Density::C || r.density == Density::D, "DenB holds A/B");
    for (const auto& r : s.fatb) c.expect(r.density == Density::A || r.density == Density::B, "FatB holds C/D");
    c.expect(s.denb.size() + s.fatb.size() == m.size(), "density split is not a partition");

    const auto a = evalkit::stratified_split(s.fatb, 0.6, 99);
    const auto b = evalkit::stratified_split(s.fatb, 0.6, 99);
    std::map<std::vector<int>, std::pair<int, int>> counts;
    for (const auto& r : a.train) ++counts[evalkit::label_signature(r)].first;
    for (const auto& r : a.test) ++counts[evalkit::label_signature(r)].second;
    for (const auto& [sig, n] : counts) {
        c.expect(n.first == 12 && n.second == 8,
                 "stratum split " + std::to_string(n.first) + ":" + std::to_string(n.second) + " (want 12:8)");
    }
    const auto ids = [](const std::vector<evalkit::ManifestRecord>& v) {
        std::vector<std::string> out;
        for (const auto& r : v) out.push_back(r.image_id);
        return out;
    };
    c.expect(ids(a.train) == ids(b.train) && ids(a.test) == ids(b.test), "split differs across equal seeds");
    const auto ten = std::vector<evalkit::ManifestRecord>(s.fatb.begin(), s.fatb.begin() + 10);
    const auto t10 = evalkit::stratified_split(ten, 0.6, 5);
    c.expect(t10.train.size() == 6 && t10.test.size() == 4, "10-record stratum is not 6:4");
    return c.o;
}

Outcome pipeline_determinism() {
    Check c;
    fixtures::ScratchDir dir("accept");
    std::vector<pipeline::ImageEntry> src;
    std::vector<pipeline::ImageEntry> tgt;
    std::mt19937_64 rng(1010);
    for (int i = 0; i < 10; ++i) {
        const auto s = dir / ("dense" + std::to_string(i) + ".png");
        const auto t = dir / ("fatty" + std::to_string(i) + ".png");
        image::save_image(fixtures::synthetic_mammogram(640, 640, rng), s, 16);
        image::save_image(fixtures::synthetic_mammogram(640, 640, rng), t, 16);
        src.push_back({"dense" + std::to_string(i), s});
        tgt.push_back({"fatty" + std::to_string(i), t});
    }
    pipeline::FalceConfig cfg;
    cfg.rng_seed = 42;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r1 = pipeline::run_batch(src, tgt, cfg, dir / "run1", 1);
    const double per_image = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 10.0;
    const auto r2 = pipeline::run_batch(src, tgt, cfg, dir / "run2", 1);
    c.expect(r1.processed == 10 && r2.processed == 10, "not every pair was processed");
    c.expect(r1.manifest.size() == r2.manifest.size(), "manifest sizes differ");
    for (std::size_t i = 0; i < std::min(r1.manifest.size(), r2.manifest.size()); ++i) {
        c.expect(r1.manifest[i].target_id == r2.manifest[i].target_id, "pairings differ");
        c.expect(fixtures::read_bytes(r1.manifest[i].output_path) == fixtures::read_bytes(r2.manifest[i].output_path),
                 "output bytes differ for " + r1.manifest[i].source_id);
    }
    c.expect(per_image < 1.0, "single-threaded latency " + fmt_double(per_image) + " s per image");
    if (c.o.pass) c.o.detail = "per-image latency " + fmt_double(per_image) + " s";
    return c.o;
}

}  // namespace

int main() {
    criterion("FDA self-transfer identity", 5, fda_self_transfer);
    criterion("FFT correctness (naive DFT, Parseval)", 30, fft_correctness);
    criterion("CLAHE degenerate equivalence and clip conservation", 10, clahe_degenerate);
    criterion("Otsu matches exhaustive oracle", 10, otsu_oracle);
    criterion("Morphology idempotence, anti-extensivity, oracle", 20, morphology);
    criterion("Loss kernels and gradients", 30, loss_kernels);
    criterion("PIM set-builder equivalence", 5, pim);
    criterion("Toy min-max adaptation", 30, toy_minmax);
    criterion("mAP evaluator vs brute force", 10, map_evaluator);
    criterion("Split protocol", 1, split_protocol);
    criterion("Pipeline determinism and throughput", 600, pipeline_determinism);
    std::printf("%d criteria failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
