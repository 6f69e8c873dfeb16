/**
 * @file pipeline.cpp
 * @brief FALCE source/target branches and the seeded batch runner
 */

#include "falce/pipeline.hpp"
#include "falce/csv.hpp"
#include "falce/error.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <thread>

namespace falce::pipeline {

namespace fs = std::filesystem;

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::BreastMask: return "breast_mask";
        case Stage::Fda: return "fda";
        case Stage::Clahe: return "clahe";
        case Stage::Overlay: return "overlay";
    }
    return "unknown";
}

void FalceConfig::validate() const {
    if (!(beta > 0.0 && beta <= 1.0)) throw InvalidArgument("beta must lie in (0, 1]");
    clahe.validate();
    target_clahe.validate();
    struct_elem.offsets();
    if (const auto* e = std::get_if<ExactSize>(&working_size); e && (e->width < 1 || e->height < 1)) {
        throw InvalidArgument("working_size must be at least 1x1");
    }
    if (const auto* s = std::get_if<ShorterSide>(&working_size); s && s->side < 1) {
        throw InvalidArgument("working_size shorter side must be >= 1");
    }
}

std::pair<GrayImage, GrayImage> prepare_pair(const GrayImage& dense, const GrayImage& fatty,
                                             const WorkingSize& ws) {
    if (const auto* e = std::get_if<ExactSize>(&ws)) {
        return {image::resize(dense, e->width, e->height), image::resize(fatty, e->width, e->height)};
    }
    if (const auto* s = std::get_if<ShorterSide>(&ws)) {
        auto d = image::fit_shorter_side(dense, s->side);
        auto f = image::fit_shorter_side(fatty, s->side);
        const int w = std::max(d.width(), f.width());
        const int h = std::max(d.height(), f.height());
        return {image::center_pad(d, w, h), image::center_pad(f, w, h)};
    }
    if (dense.width() != fatty.width() || dense.height() != fatty.height()) {
        throw DimensionMismatch("dense image is " + std::to_string(dense.width()) + "x" +
                                std::to_string(dense.height()) + " but fatty image is " +
                                std::to_string(fatty.width()) + "x" + std::to_string(fatty.height()));
    }
    return {dense, fatty};
}

GrayImage falce_source(const GrayImage& dense, const GrayImage& fatty, const FalceConfig& cfg,
                       const StageObserver& observer) {
    cfg.validate();
    const auto notify = [&](Stage s, const GrayImage& img) {
        if (observer) observer(s, img);
    };
    const auto [d, f] = prepare_pair(dense, fatty, cfg.working_size);

    // The mask comes from the original dense image, never from the enhanced one.
    notify(Stage::BreastMask, d);
    const auto mask = segment::breast_mask(d, cfg.struct_elem);

    const auto adapted = spectral::fda_transfer(d, f, cfg.beta);
    notify(Stage::Fda, adapted);
    const auto enhanced = enhance::clahe(adapted, cfg.clahe);
    notify(Stage::Clahe, enhanced);
    auto out = segment::apply_mask(enhanced, mask);
    notify(Stage::Overlay, out);
    return out;
}

GrayImage falce_target(const GrayImage& fatty, const FalceConfig& cfg) {
    return enhance::clahe(fatty, cfg.target_clahe);
}

std::vector<ImageEntry> read_image_list(const fs::path& csv_path) {
    const auto table = csv::read_file(csv_path);
    const auto id_col = table.column("image_id");
    const auto path_col = table.column("path");
    if (!id_col || !path_col) {
        throw IoError(csv_path.string() + ":1: header must contain image_id and path columns");
    }
    const fs::path base = csv_path.parent_path();
    std::vector<ImageEntry> entries;
    std::set<std::string> seen;
    for (const auto& row : table.rows) {
        if (row.fields.size() <= std::max(*id_col, *path_col)) {
            throw IoError(csv_path.string() + ":" + std::to_string(row.line) + ": too few fields");
        }
        const auto& id = row.fields[*id_col];
        const auto& p = row.fields[*path_col];
        if (id.empty() || p.empty()) {
            throw IoError(csv_path.string() + ":" + std::to_string(row.line) + ": empty image_id or path");
        }
        if (!seen.insert(id).second) continue;
        fs::path resolved(p);
        if (resolved.is_relative() && !base.empty()) resolved = base / resolved;
        entries.push_back({id, resolved});
    }
    return entries;
}

std::vector<std::size_t> sample_targets(std::size_t sources, std::size_t targets, std::uint64_t seed) {
    if (targets == 0) throw InvalidArgument("target manifest is empty");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, targets - 1);
    std::vector<std::size_t> out(sources);
    for (auto& t : out) t = pick(rng);
    return out;
}

namespace {

std::string file_stem_for(const std::string& id) {
    std::string out;
    out.reserve(id.size());
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                        c == '-' || c == '_' || c == '.';
        out.push_back(ok ? c : '_');
    }
    if (out.empty() || out == "." || out == "..") out = "_" + out;
    return out;
}

}  // namespace

BatchReport run_batch(const std::vector<ImageEntry>& sources, const std::vector<ImageEntry>& targets,
                      const FalceConfig& cfg, const fs::path& out_dir, int jobs) {
    if (sources.empty()) throw InvalidArgument("source manifest is empty");
    if (targets.empty()) throw InvalidArgument("target manifest is empty");
    cfg.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir, ec)) throw IoError(out_dir.string() + ": cannot create output directory");

    // Pairings are fixed up front so the worker count cannot influence them.
    const auto picks = sample_targets(sources.size(), targets.size(), cfg.rng_seed);

    std::vector<fs::path> outputs(sources.size());
    {
        std::set<std::string> used;
        for (std::size_t i = 0; i < sources.size(); ++i) {
            std::string stem = file_stem_for(sources[i].id);
            for (int k = 1; !used.insert(stem).second; ++k) stem = file_stem_for(sources[i].id) + "_" + std::to_string(k);
            outputs[i] = out_dir / (stem + ".png");
        }
    }

    std::vector<std::string> errors(sources.size());
    std::vector<char> ok(sources.size(), 0);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < sources.size(); i = next++) {
            try {
                const auto dense = image::load_image(sources[i].path);
                const auto fatty = image::load_image(targets[picks[i]].path);
                image::save_image(falce_source(dense, fatty, cfg), outputs[i], 16);
                ok[i] = 1;
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const int n_workers = std::clamp(jobs, 1, static_cast<int>(sources.size()));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(static_cast<std::size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }

    BatchReport report;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        if (ok[i]) {
            ++report.processed;
            report.manifest.push_back({sources[i].id, targets[picks[i]].id, outputs[i]});
        } else {
            report.failures.push_back({sources[i].id, errors[i]});
        }
    }
    std::stable_sort(report.manifest.begin(), report.manifest.end(),
                     [](const Pairing& a, const Pairing& b) { return a.source_id < b.source_id; });
    std::stable_sort(report.failures.begin(), report.failures.end(),
                     [](const Failure& a, const Failure& b) { return a.source_id < b.source_id; });
    write_manifest_csv(report, out_dir / "manifest.csv");
    return report;
}

void write_manifest_csv(const BatchReport& report, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << "source_id,target_id,output_path\n";
    for (const auto& p : report.manifest) {
        out << csv::escape(p.source_id) << ',' << csv::escape(p.target_id) << ','
            << csv::escape(p.output_path.string()) << '\n';
    }
    if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace falce::pipeline
