#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "uapforge/eval/harness.hpp"

// Deterministic report rendering. Percentages carry 2 decimals and losses 6,
// in CSV text and (as rounded numbers) in JSON; JSON keys are sorted.
namespace uapforge::eval {

enum class ReportFormat { Csv, Json };

std::string_view to_string(ReportFormat format);
ReportFormat parse_report_format(std::string_view text);

inline constexpr std::string_view kFoolingCsvHeader =
    "target_arch,source_arch,n_images,fooling_rate,clean_accuracy,adversarial_accuracy,baseline_fooling_rate,"
    "target_class,target_accuracy";
inline constexpr std::string_view kAlphaSweepCsvHeader = "alpha,fooling_rate,train_fooling_rate,final_loss,aborted,best";

/// "<stem>-s<seed>-<config hash>.<csv|json>"
std::string report_file_name(std::string_view stem, std::uint64_t seed, std::string_view config_hash,
                             ReportFormat format);

double round_percent(double value);
double round_loss(double value);

std::string to_csv(const FoolingReport& report);
nlohmann::json to_json(const FoolingReport& report);
FoolingReport fooling_report_from_json(const nlohmann::json& doc);

/// source_arch,<target archs...>,avg_plus
std::string to_csv(const TransferabilityMatrix& matrix);
nlohmann::json to_json(const TransferabilityMatrix& matrix);
TransferabilityMatrix transferability_from_json(const nlohmann::json& doc);

std::string to_csv(const AlphaSweepTable& table);
nlohmann::json to_json(const AlphaSweepTable& table);
AlphaSweepTable alpha_sweep_from_json(const nlohmann::json& doc);

/// Pretty-printed JSON with a trailing newline.
std::string render_json(const nlohmann::json& doc);

/// Writes `content` verbatim; DataError on I/O failure.
void emit_report(std::string_view content, const std::filesystem::path& path);

}  // namespace uapforge::eval
