#include "uapforge/eval/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace uapforge::eval {
namespace {

using nlohmann::json;

std::string fixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    return buf;
}

std::string pct(double value) { return fixed(value, 2); }

std::string alpha_text(double a) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", a);
    return buf;
}

template <class T>
json optional_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

}  // namespace

std::string_view to_string(ReportFormat format) { return format == ReportFormat::Csv ? "csv" : "json"; }

ReportFormat parse_report_format(std::string_view text) {
    if (text == "csv") return ReportFormat::Csv;
    if (text == "json") return ReportFormat::Json;
    throw ConfigError("report format: expected csv or json, got '" + std::string(text) + "'");
}

std::string report_file_name(std::string_view stem, std::uint64_t seed, std::string_view config_hash,
                             ReportFormat format) {
    return std::string(stem) + "-s" + std::to_string(seed) + "-" + std::string(config_hash) + "." +
           std::string(to_string(format));
}

double round_percent(double value) { return std::round(value * 100) / 100; }
double round_loss(double value) { return std::round(value * 1e6) / 1e6; }

std::string to_csv(const FoolingReport& r) {
    std::string out(kFoolingCsvHeader);
    out += "\n" + r.target_arch + "," + r.perturbation.value("source_arch", std::string()) + "," +
           std::to_string(r.n_images) + "," + pct(r.fooling_rate) + "," + pct(r.clean_accuracy) + "," +
           pct(r.adversarial_accuracy) + "," + (r.baseline_fooling_rate ? pct(*r.baseline_fooling_rate) : "") + "," +
           (r.target_class ? std::to_string(*r.target_class) : "") + "," +
           (r.target_accuracy ? pct(*r.target_accuracy) : "") + "\n";
    return out;
}

json to_json(const FoolingReport& r) {
    return {{"target_arch", r.target_arch},
            {"perturbation", r.perturbation},
            {"n_images", r.n_images},
            {"fooling_rate", round_percent(r.fooling_rate)},
            {"clean_accuracy", round_percent(r.clean_accuracy)},
            {"adversarial_accuracy", round_percent(r.adversarial_accuracy)},
            {"baseline_fooling_rate",
             r.baseline_fooling_rate ? json(round_percent(*r.baseline_fooling_rate)) : json(nullptr)},
            {"target_class", optional_json(r.target_class)},
            {"target_accuracy", r.target_accuracy ? json(round_percent(*r.target_accuracy)) : json(nullptr)},
            {"outcomes",
             {{"adv_correct", r.adv_correct}, {"changed_to_wrong", r.changed_to_wrong}, {"stayed_wrong", r.stayed_wrong}}}};
}

FoolingReport fooling_report_from_json(const json& doc) {
    try {
        FoolingReport r;
        r.target_arch = doc.at("target_arch").get<std::string>();
        r.perturbation = doc.at("perturbation");
        r.n_images = doc.at("n_images").get<std::size_t>();
        r.fooling_rate = doc.at("fooling_rate").get<double>();
        r.clean_accuracy = doc.at("clean_accuracy").get<double>();
        r.adversarial_accuracy = doc.at("adversarial_accuracy").get<double>();
        if (!doc.at("baseline_fooling_rate").is_null()) r.baseline_fooling_rate = doc["baseline_fooling_rate"].get<double>();
        if (!doc.at("target_class").is_null()) r.target_class = doc["target_class"].get<int>();
        if (!doc.at("target_accuracy").is_null()) r.target_accuracy = doc["target_accuracy"].get<double>();
        const auto& o = doc.at("outcomes");
        r.adv_correct = o.at("adv_correct").get<std::size_t>();
        r.changed_to_wrong = o.at("changed_to_wrong").get<std::size_t>();
        r.stayed_wrong = o.at("stayed_wrong").get<std::size_t>();
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("fooling report: ") + e.what());
    }
}

std::string to_csv(const TransferabilityMatrix& m) {
    std::string out = "source_arch";
    for (const auto& a : m.archs) out += "," + a;
    out += ",avg_plus\n";
    for (std::size_t s = 0; s < m.archs.size(); ++s) {
        out += m.archs[s];
        for (double v : m.rates[s]) out += "," + pct(v);
        out += "," + pct(m.avg_plus[s]) + "\n";
    }
    return out;
}

json to_json(const TransferabilityMatrix& m) {
    json rows = json::array();
    for (std::size_t s = 0; s < m.archs.size(); ++s) {
        json rates = json::array();
        for (double v : m.rates[s]) rates.push_back(round_percent(v));
        rows.push_back({{"source_arch", m.archs[s]}, {"rates", rates}, {"avg_plus", round_percent(m.avg_plus[s])}});
    }
    return {{"archs", m.archs}, {"rows", rows}};
}

TransferabilityMatrix transferability_from_json(const json& doc) {
    try {
        TransferabilityMatrix m;
        m.archs = doc.at("archs").get<std::vector<std::string>>();
        for (const auto& row : doc.at("rows")) {
            m.rates.push_back(row.at("rates").get<std::vector<double>>());
            m.avg_plus.push_back(row.at("avg_plus").get<double>());
        }
        if (m.rates.size() != m.archs.size()) throw DataError("transferability report: row count mismatch");
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("transferability report: ") + e.what());
    }
}

std::string to_csv(const AlphaSweepTable& t) {
    std::string out(kAlphaSweepCsvHeader);
    out += "\n";
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& r = t.rows[i];
        out += alpha_text(r.alpha) + "," + pct(r.fooling_rate) + "," + pct(r.train_fooling_rate) + "," +
               fixed(r.final_loss, 6) + "," + (r.aborted ? "1" : "0") + "," + (i == t.best ? "*" : "") + "\n";
    }
    return out;
}

json to_json(const AlphaSweepTable& t) {
    json rows = json::array();
    for (const auto& r : t.rows) {
        rows.push_back({{"alpha", r.alpha},
                        {"fooling_rate", round_percent(r.fooling_rate)},
                        {"train_fooling_rate", round_percent(r.train_fooling_rate)},
                        {"final_loss", round_loss(r.final_loss)},
                        {"aborted", r.aborted}});
    }
    return {{"source_arch", t.source_arch}, {"best", t.best}, {"best_alpha", t.rows.at(t.best).alpha}, {"rows", rows}};
}

AlphaSweepTable alpha_sweep_from_json(const json& doc) {
    try {
        AlphaSweepTable t;
        t.source_arch = doc.at("source_arch").get<std::string>();
        t.best = doc.at("best").get<std::size_t>();
        for (const auto& r : doc.at("rows")) {
            t.rows.push_back({.alpha = r.at("alpha").get<double>(),
                              .fooling_rate = r.at("fooling_rate").get<double>(),
                              .train_fooling_rate = r.at("train_fooling_rate").get<double>(),
                              .final_loss = r.at("final_loss").get<double>(),
                              .aborted = r.at("aborted").get<bool>()});
        }
        if (t.best >= t.rows.size()) throw DataError("alpha sweep report: best row out of range");
        return t;
    } catch (const json::exception& e) {
        throw DataError(std::string("alpha sweep report: ") + e.what());
    }
}

std::string render_json(const json& doc) { return doc.dump(2) + "\n"; }

void emit_report(std::string_view content, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write report " + path.string());
    out.write(content.data(), std::streamsize(content.size()));
    if (!out) throw DataError("write failed for report " + path.string());
}

}  // namespace uapforge::eval
