/**
 * @file evalkit.cpp
 * @brief AP/mAP evaluation, class mapping and manifest splits
 */

#include "falce/evalkit.hpp"
#include "falce/csv.hpp"
#include "falce/daod.hpp"
#include "falce/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace falce::evalkit {

namespace {

/// Collapses runs of whitespace into single spaces after trimming.
std::string normalize_label(const std::string& raw) {
    std::string out;
    for (char c : csv::trim(raw)) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!out.empty() && out.back() != ' ') out.push_back(' ');
        } else {
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    return out;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line) + ": ";
}

struct Columns {
    std::vector<std::size_t> index;

    const std::string& get(const csv::Row& row, std::size_t k) const { return row.fields[index[k]]; }
};

/// Resolves the named columns or throws with the file name.
Columns require_columns(const csv::Table& t, const std::filesystem::path& path,
                        std::initializer_list<const char*> names) {
    Columns c;
    for (const char* n : names) {
        const auto i = t.column(n);
        if (!i) throw IoError(path.string() + ":1: missing column '" + n + "'");
        c.index.push_back(*i);
    }
    return c;
}

void require_width(const csv::Row& row, const Columns& c, const std::filesystem::path& path) {
    const auto need = *std::max_element(c.index.begin(), c.index.end()) + 1;
    if (row.fields.size() < need) throw IoError(where(path, row.line) + "too few fields");
}

double field_double(const std::string& v, const char* name, const std::filesystem::path& path, std::size_t line) {
    const auto d = csv::to_double(v);
    if (!d || !std::isfinite(*d)) throw IoError(where(path, line) + name + " is not a number: '" + v + "'");
    return *d;
}

int field_int(const std::string& v, const char* name, const std::filesystem::path& path, std::size_t line) {
    const auto i = csv::to_int(v);
    if (!i || *i < 0 || *i > 1'000'000) throw IoError(where(path, line) + name + " is not a class id: '" + v + "'");
    return static_cast<int>(*i);
}

BBox field_box(const csv::Row& row, const Columns& c, std::size_t first, const std::filesystem::path& path) {
    const double x1 = field_double(c.get(row, first), "x1", path, row.line);
    const double y1 = field_double(c.get(row, first + 1), "y1", path, row.line);
    const double x2 = field_double(c.get(row, first + 2), "x2", path, row.line);
    const double y2 = field_double(c.get(row, first + 3), "y2", path, row.line);
    BBox b{x1, y1, x2, y2};
    if (!b.valid()) throw IoError(where(path, row.line) + "box requires x1 < x2 and y1 < y2");
    return b;
}

}  // namespace

std::optional<Density> parse_density(const std::string& text) {
    const auto t = csv::trim(text);
    if (t.size() != 1) return std::nullopt;
    switch (std::toupper(static_cast<unsigned char>(t[0]))) {
        case 'A': return Density::A;
        case 'B': return Density::B;
        case 'C': return Density::C;
        case 'D': return Density::D;
        default: return std::nullopt;
    }
}

char density_letter(Density d) {
    return static_cast<char>('A' + static_cast<int>(d));
}

double average_precision(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int class_id,
                         double iou_thr) {
    if (!(iou_thr > 0.0 && iou_thr < 1.0)) throw InvalidArgument("iou threshold must lie in (0, 1)");
    std::vector<std::size_t> gt_idx;
    for (std::size_t i = 0; i < gts.size(); ++i) {
        if (gts[i].class_id == class_id) gt_idx.push_back(i);
    }
    if (gt_idx.empty()) return 0.0;

    std::vector<const Detection*> order;
    for (const auto& d : dets) {
        if (d.class_id == class_id) order.push_back(&d);
    }
    std::stable_sort(order.begin(), order.end(),
                     [](const Detection* a, const Detection* b) { return a->score > b->score; });

    std::vector<char> matched(gt_idx.size(), 0);
    std::vector<double> precision;
    std::vector<double> recall;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& d = *order[k];
        std::size_t best = gt_idx.size();
        double best_iou = -1.0;
        for (std::size_t g = 0; g < gt_idx.size(); ++g) {
            const auto& gt = gts[gt_idx[g]];
            if (matched[g] || gt.image_id != d.image_id) continue;
            const double o = daod::iou(d.box, gt.box);
            if (o >= iou_thr && o > best_iou) {
                best = g;
                best_iou = o;
            }
        }
        if (best < gt_idx.size()) {
            matched[best] = 1;
            ++tp;
        }
        precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(gt_idx.size()));
    }

    // Precision envelope, then area under the step function at each recall change.
    for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t k = 0; k < recall.size(); ++k) {
        if (recall[k] > prev_recall) {
            ap += (recall[k] - prev_recall) * precision[k];
            prev_recall = recall[k];
        }
    }
    return ap;
}

ApReport evaluate(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int num_classes,
                  double iou_thr) {
    if (num_classes < 1) throw InvalidArgument("num_classes must be >= 1");
    std::set<int> with_gt;
    for (const auto& g : gts) {
        if (g.class_id >= 0 && g.class_id < num_classes) with_gt.insert(g.class_id);
    }
    if (with_gt.empty()) throw InvalidArgument("no class has ground truth");
    ApReport r;
    double sum = 0.0;
    for (int c : with_gt) {
        const double ap = average_precision(dets, gts, c, iou_thr);
        r.per_class.emplace_back(c, ap);
        sum += ap;
    }
    r.map = sum / static_cast<double>(with_gt.size());
    return r;
}

double mean_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int num_classes,
               double iou_thr) {
    return evaluate(dets, gts, num_classes, iou_thr).map;
}

void write_report_csv(const ApReport& report, std::ostream& out) {
    out << "class_id,ap\n" << std::fixed << std::setprecision(6);
    for (const auto& [c, ap] : report.per_class) out << c << ',' << ap << '\n';
    out << "mAP," << report.map << '\n';
}

std::optional<int> map_classes(const std::string& raw_label) {
    static const std::map<std::string, int> table = {
        {"mass", 0},
        {"ms", 0},
        {"suspicious calcification", 1},
        {"suspicious calcifications", 1},
        {"sc", 1},
        {"asymmetry", 2},
        {"focal asymmetry", 2},
        {"global asymmetry", 2},
        {"as", 2},
        {"suspicious lymph node", 3},
        {"suspicious lymph nodes", 3},
        {"ln", 3},
    };
    const auto it = table.find(normalize_label(raw_label));
    if (it == table.end()) return std::nullopt;
    return it->second;
}

std::vector<int> label_signature(const ManifestRecord& r) {
    std::set<int> s;
    for (const auto& f : r.raw_findings) {
        if (const auto c = map_classes(f.label)) s.insert(*c);
    }
    return {s.begin(), s.end()};
}

DensitySplit split_by_density(const std::vector<ManifestRecord>& manifest) {
    DensitySplit out;
    for (const auto& r : manifest) {
        if (r.density == Density::C || r.density == Density::D) {
            out.denb.push_back(r);
        } else {
            out.fatb.push_back(r);
        }
    }
    return out;
}

TrainTestSplit stratified_split(const std::vector<ManifestRecord>& records, double train_fraction,
                                std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train fraction must lie in (0, 1)");
    std::map<std::vector<int>, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < records.size(); ++i) strata[label_signature(records[i])].push_back(i);

    std::mt19937_64 rng(seed);
    std::vector<char> to_train(records.size(), 0);
    for (auto& [key, idx] : strata) {
        std::shuffle(idx.begin(), idx.end(), rng);
        // The epsilon keeps 0.6 * 10 at 6 despite binary rounding.
        const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(idx.size()) - 1e-9));
        for (std::size_t k = 0; k < n_train && k < idx.size(); ++k) to_train[idx[k]] = 1;
    }
    TrainTestSplit out;
    for (std::size_t i = 0; i < records.size(); ++i) (to_train[i] ? out.train : out.test).push_back(records[i]);
    return out;
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
    const auto t = csv::read_file(path);
    const auto c = require_columns(t, path, {"image_id", "path", "density", "label", "x1", "y1", "x2", "y2"});
    std::vector<ManifestRecord> out;
    std::map<std::string, std::size_t> index;
    for (const auto& row : t.rows) {
        require_width(row, c, path);
        const auto& id = c.get(row, 0);
        if (id.empty()) throw IoError(where(path, row.line) + "empty image_id");
        const auto density = parse_density(c.get(row, 2));
        if (!density) throw IoError(where(path, row.line) + "density must be one of A, B, C, D");
        auto [it, fresh] = index.emplace(id, out.size());
        if (fresh) {
            out.push_back({id, c.get(row, 1), *density, {}});
        } else if (out[it->second].density != *density || out[it->second].path != c.get(row, 1)) {
            throw IoError(where(path, row.line) + "conflicting path or density for image " + id);
        }
        const auto& label = c.get(row, 3);
        const bool box_empty = c.get(row, 4).empty() && c.get(row, 5).empty() && c.get(row, 6).empty() &&
                               c.get(row, 7).empty();
        if (label.empty()) {
            if (!box_empty) throw IoError(where(path, row.line) + "box given without a label");
            continue;
        }
        out[it->second].raw_findings.push_back({label, field_box(row, c, 4, path)});
    }
    return out;
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
    const auto t = csv::read_file(path);
    const auto c = require_columns(t, path, {"image_id", "class_id", "score", "x1", "y1", "x2", "y2"});
    std::vector<Detection> out;
    for (const auto& row : t.rows) {
        require_width(row, c, path);
        Detection d;
        d.image_id = c.get(row, 0);
        if (d.image_id.empty()) throw IoError(where(path, row.line) + "empty image_id");
        d.class_id = field_int(c.get(row, 1), "class_id", path, row.line);
        d.score = field_double(c.get(row, 2), "score", path, row.line);
        if (d.score < 0.0 || d.score > 1.0) throw IoError(where(path, row.line) + "score outside [0, 1]");
        d.box = field_box(row, c, 3, path);
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path) {
    const auto t = csv::read_file(path);
    std::vector<GroundTruth> out;
    if (t.column("label") && t.column("density")) {
        for (const auto& r : read_manifest(path)) {
            for (const auto& f : r.raw_findings) {
                if (const auto cls = map_classes(f.label)) out.push_back({r.image_id, *cls, f.box});
            }
        }
        return out;
    }
    const auto c = require_columns(t, path, {"image_id", "class_id", "x1", "y1", "x2", "y2"});
    for (const auto& row : t.rows) {
        require_width(row, c, path);
        GroundTruth g;
        g.image_id = c.get(row, 0);
        if (g.image_id.empty()) throw IoError(where(path, row.line) + "empty image_id");
        g.class_id = field_int(c.get(row, 1), "class_id", path, row.line);
        g.box = field_box(row, c, 2, path);
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace falce::evalkit
