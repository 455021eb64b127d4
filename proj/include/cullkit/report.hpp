#pragma once

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cullkit/experiment.hpp"
#include "cullkit/metrics.hpp"

namespace cullkit {

namespace detail {

/// Fixed-point text for reports, so report bytes never depend on locale or
/// shortest-round-trip formatting.
inline std::string fixed(double v, int digits = 6)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    // Normalise negative zero.
    if (std::string_view(buf).find_first_not_of("-0.") == std::string_view::npos && buf[0] == '-') return buf + 1;
    return buf;
}

/// Values stored in JSON reports are rounded the same way as the CSV columns.
inline double rounded(double v, int digits = 6) { return std::stod(fixed(v, digits)); }

inline std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

inline void write_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

} // namespace detail

// ---------------------------------------------------------------------------
// Accuracy reports

inline std::string accuracy_csv(const AccuracyReport& r)
{
    std::ostringstream out;
    out << "class_id,class,symmetric,instances,failed,reproj_" << detail::fixed(r.reproj_threshold_px, 0)
        << "px_accuracy,addi_" << detail::fixed(100.0 * r.addi_fraction, 0) << "pct_accuracy,mean_reproj_px,mean_addi\n";
    auto row = [&](const ClassAccuracy& c, bool avg) {
        out << (avg ? std::string("avg") : std::to_string(c.class_id)) << ',' << detail::csv_field(c.name) << ','
            << (avg ? "" : (c.symmetric ? "1" : "0")) << ',' << c.instances << ',' << c.failed << ','
            << detail::fixed(c.reproj_accuracy) << ',' << detail::fixed(c.addi_accuracy) << ','
            << detail::fixed(c.mean_reproj_px) << ',' << detail::fixed(c.mean_addi) << '\n';
    };
    for (const auto& c : r.classes) row(c, false);
    row(r.average, true);
    return out.str();
}

/// One row per integer threshold, one column per class plus the average.
inline std::string accuracy_curve_csv(const AccuracyReport& r)
{
    std::ostringstream out;
    out << "threshold_px";
    for (const auto& c : r.classes) out << ',' << detail::csv_field(c.name);
    out << ",avg\n";
    for (int t = 1; t <= kCurveMaxThreshold; ++t) {
        out << t;
        for (const auto& c : r.classes) out << ',' << detail::fixed(c.reproj_curve[static_cast<std::size_t>(t - 1)]);
        out << ',' << detail::fixed(r.average.reproj_curve[static_cast<std::size_t>(t - 1)]) << '\n';
    }
    return out.str();
}

inline nlohmann::ordered_json class_accuracy_json(const ClassAccuracy& c)
{
    std::vector<double> curve;
    for (double v : c.reproj_curve) curve.push_back(detail::rounded(v));
    return {{"name", c.name},
            {"symmetric", c.symmetric},
            {"instances", c.instances},
            {"failed", c.failed},
            {"reproj_accuracy", detail::rounded(c.reproj_accuracy)},
            {"addi_accuracy", detail::rounded(c.addi_accuracy)},
            {"mean_reproj_px", detail::rounded(c.mean_reproj_px)},
            {"mean_addi", detail::rounded(c.mean_addi)},
            {"reproj_curve", curve}};
}

inline nlohmann::ordered_json accuracy_json(const AccuracyReport& r)
{
    nlohmann::ordered_json classes = nlohmann::ordered_json::object();
    for (const auto& c : r.classes) classes[std::to_string(c.class_id)] = class_accuracy_json(c);
    return {{"reproj_threshold_px", r.reproj_threshold_px},
            {"addi_fraction", r.addi_fraction},
            {"curve_thresholds_px", {1, kCurveMaxThreshold}},
            {"classes", classes},
            {"average", class_accuracy_json(r.average)}};
}

/// accuracy.csv, curves.csv and accuracy.json in `dir`.
inline void write_accuracy_report(const AccuracyReport& r, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    detail::write_file(dir / "accuracy.csv", accuracy_csv(r));
    detail::write_file(dir / "curves.csv", accuracy_curve_csv(r));
    detail::write_file(dir / "accuracy.json", accuracy_json(r).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Bias tables

inline nlohmann::ordered_json bias_table_json(const BiasTable& t)
{
    nlohmann::ordered_json classes = nlohmann::ordered_json::object();
    for (const auto& [id, e] : t.classes)
        classes[std::to_string(id)] = {{"offset", e.offset},
                                       {"range_min", e.range_min},
                                       {"range_max", e.range_max},
                                       {"bin_width", e.bin_width},
                                       {"bins", e.bins},
                                       {"instances", e.instances},
                                       {"low_confidence", e.low_confidence}};
    return {{"version", 1}, {"bins", t.bins}, {"classes", classes}};
}

inline void write_bias_table(const BiasTable& t, const std::filesystem::path& path)
{
    detail::write_file(path, bias_table_json(t).dump(2) + "\n");
}

inline BiasTable load_bias_table(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        if (j.value("version", 0) != 1) throw Error(ErrorCode::ParseError, path.string() + ": bias table needs version 1");
        BiasTable t;
        t.bins = j.at("bins").get<int>();
        for (const auto& [key, v] : j.at("classes").items()) {
            BiasEntry e;
            e.offset = v.at("offset").get<double>();
            e.range_min = v.value("range_min", 0.0);
            e.range_max = v.value("range_max", 0.0);
            e.bin_width = v.value("bin_width", 0.0);
            e.bins = v.value("bins", t.bins);
            e.instances = v.value("instances", std::size_t{0});
            e.low_confidence = v.value("low_confidence", false);
            if (!std::isfinite(e.offset)) throw Error(ErrorCode::ParseError, path.string() + ": non-finite offset");
            t.classes[std::stoi(key)] = e;
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    } catch (const std::logic_error& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": bad class id");
    }
}

// ---------------------------------------------------------------------------
// Experiment reports

inline std::string experiment_summary_csv(const ExperimentReport& r)
{
    std::ostringstream out;
    out << "strategy,k,trials,failures,reproj_5px_accuracy,addi_10pct_accuracy,mean_reproj_px,mean_addi\n";
    for (const auto& s : r.summaries)
        out << to_string(s.strategy) << ',' << s.k << ',' << s.trials << ',' << s.failures << ','
            << detail::fixed(s.reproj_accuracy) << ',' << detail::fixed(s.addi_accuracy) << ','
            << detail::fixed(s.mean_reproj_px) << ',' << detail::fixed(s.mean_addi, 9) << '\n';
    return out.str();
}

/// Accuracy-vs-k: one row per k, one column per strategy (argmax repeats its
/// single value, since it ignores k).
inline std::string experiment_k_curve_csv(const ExperimentReport& r, const ExperimentConfig& cfg)
{
    std::ostringstream out;
    out << 'k';
    for (Strategy s : cfg.strategies) out << ',' << to_string(s);
    out << '\n';
    for (int k : cfg.k_values) {
        out << k;
        for (Strategy s : cfg.strategies) out << ',' << detail::fixed(r.find(s, k).reproj_accuracy);
        out << '\n';
    }
    return out.str();
}

inline std::string experiment_trials_log(const ExperimentReport& r)
{
    std::ostringstream out;
    for (std::size_t t = 0; t < r.trials.size(); ++t)
        for (const auto& o : r.trials[t]) {
            out << "trial=" << t << " strategy=" << to_string(o.strategy) << " k=" << o.k;
            if (o.failed)
                out << " failed=" << (o.note.empty() ? "unknown" : o.note) << '\n';
            else
                out << " reproj_px=" << detail::fixed(o.reproj_px) << " addi=" << detail::fixed(o.addi, 9)
                    << " reproj_ok=" << o.reproj_ok << " addi_ok=" << o.addi_ok << '\n';
        }
    return out.str();
}

inline nlohmann::ordered_json experiment_json(const ExperimentReport& r, const ExperimentConfig& cfg)
{
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& s : r.summaries)
        rows.push_back({{"strategy", to_string(s.strategy)},
                        {"k", s.k},
                        {"trials", s.trials},
                        {"failures", s.failures},
                        {"reproj_5px_accuracy", detail::rounded(s.reproj_accuracy)},
                        {"addi_10pct_accuracy", detail::rounded(s.addi_accuracy)},
                        {"mean_reproj_px", detail::rounded(s.mean_reproj_px)},
                        {"mean_addi", detail::rounded(s.mean_addi, 9)}});
    return {{"seed", cfg.seed},
            {"trials", cfg.trials},
            {"mesh_diameter", detail::rounded(r.mesh_diameter, 9)},
            {"k_values", cfg.k_values},
            {"summaries", rows}};
}

/// summary.csv, k_curve.csv, report.json and trials.log in `dir`.
inline void write_experiment_report(const ExperimentReport& r, const ExperimentConfig& cfg,
                                    const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    detail::write_file(dir / "summary.csv", experiment_summary_csv(r));
    detail::write_file(dir / "k_curve.csv", experiment_k_curve_csv(r, cfg));
    detail::write_file(dir / "report.json", experiment_json(r, cfg).dump(2) + "\n");
    detail::write_file(dir / "trials.log", experiment_trials_log(r));
}

// ---------------------------------------------------------------------------
// Plain-text rendering

inline std::vector<std::vector<std::string>> parse_csv(const std::string& text)
{
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        any = true;
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else if (c != '\r') {
            field += c;
        }
    }
    if (quoted) throw Error(ErrorCode::ParseError, "unterminated quote in CSV");
    if (any) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Column-aligned table; numeric-looking cells are right-aligned.
inline std::string render_table(const std::vector<std::vector<std::string>>& rows)
{
    std::vector<std::size_t> width;
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (width.size() <= c) width.push_back(0);
            width[c] = std::max(width[c], r[c].size());
        }
    auto numeric = [](const std::string& s) {
        return !s.empty() && s.find_first_not_of("0123456789.-+e") == std::string::npos;
    };
    std::ostringstream out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::string line;
        for (std::size_t c = 0; c < rows[i].size(); ++c) {
            const std::string& s = rows[i][c];
            const std::string pad(width[c] - s.size(), ' ');
            if (c) line += "  ";
            line += (i > 0 && numeric(s)) ? pad + s : s + pad;
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out << line << '\n';
        if (i == 0) {
            std::size_t total = 0;
            for (std::size_t w : width) total += w;
            out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
        }
    }
    return out.str();
}

} // namespace cullkit
