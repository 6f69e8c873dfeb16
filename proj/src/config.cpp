/**
 * @file config.cpp
 * @brief Flat key/value pipeline configuration (TOML-compatible subset)
 */

#include "falce/csv.hpp"
#include "falce/error.hpp"
#include "falce/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <limits>
#include <sstream>

namespace falce::pipeline {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string unquote(const std::string& v) {
    if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\''))) {
        return v.substr(1, v.size() - 2);
    }
    return v;
}

/// Drops a trailing `# comment` that is not inside quotes.
std::string strip_comment(const std::string& line) {
    char quote = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quote) {
            if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == '#') {
            return line.substr(0, i);
        }
    }
    return line;
}

double need_double(const std::string& key, const std::string& v) {
    const auto d = csv::to_double(v);
    if (!d) throw InvalidArgument("config key " + key + ": expected a number, got '" + v + "'");
    return *d;
}

int need_int(const std::string& key, const std::string& v) {
    const auto i = csv::to_int(v);
    if (!i || *i < std::numeric_limits<int>::min() || *i > std::numeric_limits<int>::max()) {
        throw InvalidArgument("config key " + key + ": expected an integer, got '" + v + "'");
    }
    return static_cast<int>(*i);
}

}  // namespace

double parse_clip_limit(const std::string& text) {
    const auto t = lower(unquote(csv::trim(text)));
    if (t == "unlimited" || t == "inf" || t == "none") return enhance::ClaheParams::kUnlimited;
    const auto d = csv::to_double(t);
    if (!d || !(*d >= 1.0)) throw InvalidArgument("clip limit must be >= 1 or 'unlimited', got '" + text + "'");
    return *d;
}

segment::ElementShape parse_shape(const std::string& text) {
    const auto t = lower(unquote(csv::trim(text)));
    if (t == "square") return segment::ElementShape::Square;
    if (t == "disk") return segment::ElementShape::Disk;
    throw InvalidArgument("structuring element shape must be 'square' or 'disk', got '" + text + "'");
}

WorkingSize parse_working_size(const std::string& text) {
    const auto t = lower(unquote(csv::trim(text)));
    if (t == "none" || t == "native") return NativeSize{};
    if (const auto x = t.find('x'); x != std::string::npos) {
        const auto w = csv::to_int(t.substr(0, x));
        const auto h = csv::to_int(t.substr(x + 1));
        if (!w || !h || *w < 1 || *h < 1 || *w > 1 << 16 || *h > 1 << 16) {
            throw InvalidArgument("working_size must be 'none', 'WxH' or a shorter-side length, got '" + text + "'");
        }
        return ExactSize{static_cast<int>(*w), static_cast<int>(*h)};
    }
    const auto side = csv::to_int(t);
    if (!side || *side < 1 || *side > 1 << 16) {
        throw InvalidArgument("working_size must be 'none', 'WxH' or a shorter-side length, got '" + text + "'");
    }
    return ShorterSide{static_cast<int>(*side)};
}

ParsedConfig parse_config(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = csv::trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw InvalidArgument("config line " + std::to_string(line_no) + ": malformed section header");
            }
            section = csv::trim(line.substr(1, line.size() - 2)) + ".";
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw InvalidArgument("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const auto key = section + csv::trim(line.substr(0, eq));
        const auto value = unquote(csv::trim(line.substr(eq + 1)));
        if (key.empty() || value.empty()) {
            throw InvalidArgument("config line " + std::to_string(line_no) + ": empty key or value");
        }
        if (!kv.emplace(key, value).second) {
            throw InvalidArgument("config line " + std::to_string(line_no) + ": duplicate key " + key);
        }
    }

    ParsedConfig parsed;
    FalceConfig& cfg = parsed.config;
    // target_clahe.* fields start from the resolved clahe.* values.
    std::map<std::string, std::string> target_kv;
    for (const auto& [key, value] : kv) {
        if (key == "beta") {
            cfg.beta = need_double(key, value);
        } else if (key == "seed") {
            const auto s = csv::to_int(value);
            if (!s || *s < 0) throw InvalidArgument("config key seed: expected a non-negative integer");
            cfg.rng_seed = static_cast<std::uint64_t>(*s);
            parsed.has_seed = true;
        } else if (key == "working_size") {
            cfg.working_size = parse_working_size(value);
        } else if (key == "clahe.clip_limit") {
            cfg.clahe.clip_limit = parse_clip_limit(value);
        } else if (key == "clahe.tiles_x") {
            cfg.clahe.tiles_x = need_int(key, value);
        } else if (key == "clahe.tiles_y") {
            cfg.clahe.tiles_y = need_int(key, value);
        } else if (key == "clahe.bins") {
            cfg.clahe.bins = need_int(key, value);
        } else if (key.rfind("target_clahe.", 0) == 0) {
            target_kv.emplace(key, value);
        } else if (key == "struct_elem.shape") {
            cfg.struct_elem.shape = parse_shape(value);
        } else if (key == "struct_elem.radius") {
            cfg.struct_elem.radius = need_int(key, value);
        } else {
            throw InvalidArgument("unknown config key '" + key + "'");
        }
    }
    cfg.target_clahe = cfg.clahe;
    for (const auto& [key, value] : target_kv) {
        auto& t = cfg.target_clahe;
        if (key == "target_clahe.clip_limit") {
            t.clip_limit = parse_clip_limit(value);
        } else if (key == "target_clahe.tiles_x") {
            t.tiles_x = need_int(key, value);
        } else if (key == "target_clahe.tiles_y") {
            t.tiles_y = need_int(key, value);
        } else if (key == "target_clahe.bins") {
            t.bins = need_int(key, value);
        } else {
            throw InvalidArgument("unknown config key '" + key + "'");
        }
    }
    cfg.validate();
    return parsed;
}

ParsedConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
}

}  // namespace falce::pipeline
