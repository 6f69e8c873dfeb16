/**
 * @file pipeline.hpp
 * @brief End-to-end FALCE preprocessing: amplitude transfer, CLAHE and mask overlay
 *
 * Source (dense) branch:  apply_mask(clahe(fda_transfer(dense, fatty, beta)), breast_mask(dense))
 * Target (fatty) branch:  clahe(fatty)
 */
#pragma once

#include "falce/enhance.hpp"
#include "falce/image.hpp"
#include "falce/segment.hpp"
#include "falce/spectral.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <variant>
#include <vector>

namespace falce::pipeline {

using image::GrayImage;

/// Leave inputs at their native size (they must then match).
struct NativeSize {
    friend bool operator==(const NativeSize&, const NativeSize&) = default;
};

/// Resize both inputs to exactly width x height.
struct ExactSize {
    int width = 0;
    int height = 0;
    friend bool operator==(const ExactSize&, const ExactSize&) = default;
};

/// Resize each input so its shorter side is `side` (aspect kept), then
/// zero-pad both at the center to the larger of the two extents.
struct ShorterSide {
    int side = 640;
    friend bool operator==(const ShorterSide&, const ShorterSide&) = default;
};

using WorkingSize = std::variant<NativeSize, ExactSize, ShorterSide>;

struct FalceConfig {
    double beta = spectral::kDefaultBeta;
    enhance::ClaheParams clahe;         // dense (source) branch
    enhance::ClaheParams target_clahe;  // fatty (target) branch
    segment::StructElem struct_elem;
    WorkingSize working_size = ShorterSide{640};
    std::uint64_t rng_seed = 0;

    void validate() const;
};

enum class Stage { BreastMask, Fda, Clahe, Overlay };

const char* stage_name(Stage s);

/// Receives each stage and the image that stage consumed (BreastMask) or produced.
using StageObserver = std::function<void(Stage, const GrayImage&)>;

/// Brings a dense/fatty pair to a common geometry according to `ws`.
/// Throws DimensionMismatch for NativeSize with unequal inputs.
std::pair<GrayImage, GrayImage> prepare_pair(const GrayImage& dense, const GrayImage& fatty,
                                             const WorkingSize& ws);

GrayImage falce_source(const GrayImage& dense, const GrayImage& fatty, const FalceConfig& cfg,
                       const StageObserver& observer = {});

GrayImage falce_target(const GrayImage& fatty, const FalceConfig& cfg);

struct ImageEntry {
    std::string id;
    std::filesystem::path path;
};

/// Reads a CSV with at least `image_id` and `path` columns; repeated ids keep the
/// first occurrence. Relative paths resolve against the manifest's directory.
std::vector<ImageEntry> read_image_list(const std::filesystem::path& csv_path);

struct Pairing {
    std::string source_id;
    std::string target_id;
    std::filesystem::path output_path;
};

struct Failure {
    std::string source_id;
    std::string error;
};

struct BatchReport {
    std::size_t processed = 0;
    std::vector<Failure> failures;
    std::vector<Pairing> manifest;  // successful pairings, sorted by source id
};

/// Seeded draw of one target index per source, in manifest order.
std::vector<std::size_t> sample_targets(std::size_t sources, std::size_t targets, std::uint64_t seed);

/// Runs the source branch over every entry, writing 16-bit PNGs plus
/// `manifest.csv` into out_dir. Per-image errors become failures.
BatchReport run_batch(const std::vector<ImageEntry>& sources, const std::vector<ImageEntry>& targets,
                      const FalceConfig& cfg, const std::filesystem::path& out_dir, int jobs = 1);

/// CSV `source_id,target_id,output_path`.
void write_manifest_csv(const BatchReport& report, const std::filesystem::path& path);

// -----------------------------------------------------------------------------
// Config file: flat `key = value` lines (TOML subset), `#` comments.
// Keys: beta, seed, working_size, clahe.{clip_limit,tiles_x,tiles_y,bins},
// target_clahe.{...} (defaults to the clahe values), struct_elem.{shape,radius}.
// -----------------------------------------------------------------------------

struct ParsedConfig {
    FalceConfig config;
    bool has_seed = false;
};

ParsedConfig parse_config(const std::string& text);
ParsedConfig load_config(const std::filesystem::path& path);

/// "none", "WxH" or a bare integer (shorter side).
WorkingSize parse_working_size(const std::string& text);

/// "unlimited"/"inf" or a real >= 1.
double parse_clip_limit(const std::string& text);

segment::ElementShape parse_shape(const std::string& text);

}  // namespace falce::pipeline
