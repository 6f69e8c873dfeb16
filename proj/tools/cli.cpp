/**
 * @file cli.cpp
 * @brief Subcommands: fda, run, eval-map, daod demo, split, mask, clahe
 */

#include "cli.hpp"

#include "falce/csv.hpp"
#include "falce/enhance.hpp"
#include "falce/error.hpp"
#include "falce/evalkit.hpp"
#include "falce/image.hpp"
#include "falce/pipeline.hpp"
#include "falce/segment.hpp"
#include "falce/spectral.hpp"
#include "falce/toy_adapt.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <optional>

namespace falce::cli {

namespace {

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    auto log = std::make_shared<spdlog::logger>("falce", sink);
    log->set_pattern("[%l] %v");
    auto level = spdlog::level::err;
    if (const char* env = std::getenv("FALCE_LOG")) {
        const std::string v = env;
        if (v == "info") level = spdlog::level::info;
        if (v == "debug") level = spdlog::level::debug;
    }
    log->set_level(level);
    return log;
}

/// "N" or "WxH".
std::pair<int, int> parse_tiles(const std::string& text) {
    const auto x = text.find('x');
    const auto whole = [&](const std::string& s) {
        const auto v = csv::to_int(s);
        if (!v || *v < 1 || *v > 4096) throw InvalidArgument("--tiles expects N or WxH, got '" + text + "'");
        return static_cast<int>(*v);
    };
    if (x == std::string::npos) {
        const int n = whole(text);
        return {n, n};
    }
    return {whole(text.substr(0, x)), whole(text.substr(x + 1))};
}

/// Flags shared by subcommands that run CLAHE and the breast mask.
struct EnhanceFlags {
    std::optional<std::string> clip_limit;
    std::optional<std::string> tiles;
    std::optional<std::string> se_shape;
    std::optional<int> se_radius;

    void add_clahe(CLI::App* app) {
        app->add_option("--clip-limit", clip_limit, "CLAHE clip limit (>= 1, or 'unlimited')");
        app->add_option("--tiles", tiles, "CLAHE tile grid, N or WxH");
    }
    void add_se(CLI::App* app) {
        app->add_option("--se-shape", se_shape, "structuring element shape: square or disk");
        app->add_option("--se-radius", se_radius, "structuring element radius (>= 1)");
    }
    void apply(enhance::ClaheParams& p) const {
        if (clip_limit) p.clip_limit = pipeline::parse_clip_limit(*clip_limit);
        if (tiles) std::tie(p.tiles_x, p.tiles_y) = parse_tiles(*tiles);
        p.validate();
    }
    void apply(segment::StructElem& se) const {
        if (se_shape) se.shape = pipeline::parse_shape(*se_shape);
        if (se_radius) se.radius = *se_radius;
        se.offsets();
    }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    auto log = make_logger(err);

    CLI::App app{"Fourier-adapted local contrast enhancement and domain-adaptation tooling", "falce"};
    app.require_subcommand(1);
    std::function<void()> action;

    // fda
    std::string fda_src, fda_tgt, fda_out;
    double fda_beta = spectral::kDefaultBeta;
    auto* fda = app.add_subcommand("fda", "Swap the low-frequency amplitude of SRC with that of TGT");
    fda->add_option("src", fda_src, "source image (PNG or PGM)")->required();
    fda->add_option("tgt", fda_tgt, "target style image, resized to the source size")->required();
    fda->add_option("--beta", fda_beta, "low-frequency band fraction in (0, 1]")->capture_default_str();
    fda->add_option("--out", fda_out, "output image, written with 16 bits")->required();
    fda->callback([&] {
        action = [&] {
            const auto src = image::load_image(fda_src);
            auto tgt = image::load_image(fda_tgt);
            if (tgt.width() != src.width() || tgt.height() != src.height()) {
                tgt = image::resize(tgt, src.width(), src.height());
            }
            image::save_image(spectral::fda_transfer(src, tgt, fda_beta), fda_out, 16);
            log->info("wrote {}", fda_out);
        };
    });

    // run
    std::optional<std::string> run_config;
    std::string run_src, run_tgt, run_out;
    std::optional<std::uint64_t> run_seed;
    std::optional<double> run_beta;
    int run_jobs = 1;
    EnhanceFlags run_flags;
    auto* run = app.add_subcommand("run", "Run the FALCE source branch over a dense/fatty manifest pair");
    run->add_option("--config", run_config, "key = value configuration file");
    run->add_option("--source-manifest", run_src, "CSV with image_id,path of dense images")->required();
    run->add_option("--target-manifest", run_tgt, "CSV with image_id,path of fatty images")->required();
    run->add_option("--out", run_out, "output directory")->required();
    run->add_option("--seed", run_seed, "pairing seed (required unless set in the config)");
    run->add_option("--jobs", run_jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    run->add_option("--beta", run_beta, "FDA band fraction in (0, 1]");
    run_flags.add_clahe(run);
    run_flags.add_se(run);
    run->callback([&] {
        action = [&] {
            pipeline::ParsedConfig parsed;
            if (run_config) parsed = pipeline::load_config(*run_config);
            auto& cfg = parsed.config;
            if (run_seed) {
                cfg.rng_seed = *run_seed;
                parsed.has_seed = true;
            }
            if (!parsed.has_seed) throw InvalidArgument("a seed is required: pass --seed or set seed in the config");
            if (run_beta) cfg.beta = *run_beta;
            run_flags.apply(cfg.clahe);
            run_flags.apply(cfg.struct_elem);
            cfg.validate();

            const auto sources = pipeline::read_image_list(run_src);
            const auto targets = pipeline::read_image_list(run_tgt);
            const auto report = pipeline::run_batch(sources, targets, cfg, run_out, run_jobs);
            for (const auto& f : report.failures) log->error("{}: {}", f.source_id, f.error);
            out << "processed,failed,manifest\n"
                << report.processed << ',' << report.failures.size() << ','
                << csv::escape((std::filesystem::path(run_out) / "manifest.csv").string()) << '\n';
            if (report.processed == 0) throw IoError("no source image was processed");
        };
    });

    // eval-map
    std::string eval_gt, eval_det;
    double eval_iou = evalkit::kDefaultIouThreshold;
    int eval_classes = evalkit::kNumClasses;
    auto* eval = app.add_subcommand("eval-map", "Per-class AP and mAP of detections against ground truth");
    eval->add_option("--gt", eval_gt, "ground truth CSV (image_id,class_id,x1,y1,x2,y2 or a manifest)")->required();
    eval->add_option("--det", eval_det, "detections CSV (image_id,class_id,score,x1,y1,x2,y2)")->required();
    eval->add_option("--iou-thr", eval_iou, "IoU matching threshold in (0, 1)")->capture_default_str();
    eval->add_option("--num-classes", eval_classes, "number of classes")->capture_default_str();
    eval->callback([&] {
        action = [&] {
            if (!(eval_iou > 0.0 && eval_iou < 1.0)) throw InvalidArgument("--iou-thr must lie in (0, 1)");
            const auto gts = evalkit::read_ground_truth(eval_gt);
            const auto dets = evalkit::read_detections(eval_det);
            if (gts.empty()) throw IoError(eval_gt + ": no ground-truth boxes");
            evalkit::write_report_csv(evalkit::evaluate(dets, gts, eval_classes, eval_iou), out);
        };
    });

    // daod demo
    daod::ToyAdaptConfig demo_cfg;
    std::optional<std::string> demo_out;
    auto* daod_cmd = app.add_subcommand("daod", "Domain-adaptation utilities");
    daod_cmd->require_subcommand(1);
    auto* demo = daod_cmd->add_subcommand("demo", "Adversarial toy run on shifted 2-D Gaussians; prints the history CSV");
    demo->add_option("--steps", demo_cfg.steps, "gradient steps")->capture_default_str();
    demo->add_option("--lr", demo_cfg.lr, "learning rate")->capture_default_str();
    demo->add_option("--lambda1", demo_cfg.lambda1, "weight of the discriminator loss")->capture_default_str();
    demo->add_option("--seed", demo_cfg.seed, "data and initialization seed")->required();
    demo->add_option("--out", demo_out, "history CSV path (default: standard output)");
    demo->callback([&] {
        action = [&] {
            const auto state = daod::run_toy_demo({}, demo_cfg);
            if (demo_out) {
                daod::write_history_csv(state.history, std::filesystem::path(*demo_out));
            } else {
                daod::write_history_csv(state.history, out);
            }
            if (!state.history.empty()) {
                const auto& last = state.history.back();
                log->info("final disc_acc={:.3f} class_acc={:.3f}", last.disc_acc, last.class_acc);
            }
        };
    });

    // split
    std::string split_manifest;
    double split_fraction = 0.6;
    std::uint64_t split_seed = 0;
    auto* split = app.add_subcommand("split", "DenB/FatB split plus a stratified FatB train/test split");
    split->add_option("--manifest", split_manifest, "manifest CSV (image_id,path,density,label,x1,y1,x2,y2)")
        ->required();
    split->add_option("--fraction", split_fraction, "FatB train fraction in (0, 1)")->capture_default_str();
    split->add_option("--seed", split_seed, "shuffle seed")->required();
    split->callback([&] {
        action = [&] {
            const auto records = evalkit::read_manifest(split_manifest);
            const auto parts = evalkit::split_by_density(records);
            const auto tt = evalkit::stratified_split(parts.fatb, split_fraction, split_seed);
            std::map<std::string, const char*> subset;
            for (const auto& r : parts.denb) subset[r.image_id] = "denb";
            for (const auto& r : tt.train) subset[r.image_id] = "fatb_train";
            for (const auto& r : tt.test) subset[r.image_id] = "fatb_test";
            out << "image_id,subset\n";
            for (const auto& r : records) out << csv::escape(r.image_id) << ',' << subset.at(r.image_id) << '\n';
            log->info("denb={} fatb_train={} fatb_test={}", parts.denb.size(), tt.train.size(), tt.test.size());
        };
    });

    // mask
    std::string mask_in, mask_out;
    EnhanceFlags mask_flags;
    auto* mask = app.add_subcommand("mask", "Otsu + opening + largest component breast mask");
    mask->add_option("input", mask_in, "input image")->required();
    mask->add_option("--out", mask_out, "mask image (0 background, full scale foreground)")->required();
    mask_flags.add_se(mask);
    mask->callback([&] {
        action = [&] {
            segment::StructElem se;
            mask_flags.apply(se);
            const auto m = segment::breast_mask(image::load_image(mask_in), se);
            image::save_image(segment::mask_to_image(m), mask_out, 8);
            log->info("mask covers {} pixels", m.count());
        };
    });

    // clahe
    std::string clahe_in, clahe_out;
    EnhanceFlags clahe_flags;
    auto* clahe = app.add_subcommand("clahe", "Contrast-limited adaptive histogram equalization");
    clahe->add_option("input", clahe_in, "input image")->required();
    clahe->add_option("--out", clahe_out, "output image, written with 16 bits")->required();
    clahe_flags.add_clahe(clahe);
    clahe->callback([&] {
        action = [&] {
            enhance::ClaheParams p;
            clahe_flags.apply(p);
            image::save_image(enhance::clahe(image::load_image(clahe_in), p), clahe_out, 16);
        };
    });

    try {
        app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    } catch (const CLI::CallForHelp&) {
        const CLI::App* deepest = &app;
        while (!deepest->get_subcommands().empty()) deepest = deepest->get_subcommands().back();
        out << deepest->help();
        return exit_code(ExitStatus::Success);
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_code(ExitStatus::Success);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(ExitStatus::Usage);
    }

    try {
        if (action) action();
        return exit_code(ExitStatus::Success);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(e.status());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(ExitStatus::InputOutput);
    }
}

}  // namespace falce::cli
