#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "mrt/schema.hpp"

namespace mrt {

struct Dataset {
    Schema schema;
    std::vector<RawSeries> series;
};

struct LoadOptions {
    // Quantise on ingestion when the manifest declares a period.
    bool quantise = true;
    // Keep only this fraction of the longest series (1 keeps all).
    double keep_fraction = 1.0;
};

/// Directory layout:
///   manifest.json  schema (variables, key, split_key, group_key, quantisation)
///   observed.csv   series_id,timestamp,<one column per observed variable>
///   tvk.csv        series_id,timestamp,channel,<tvk variables>
///   static.csv     series_id,channel,<key attributes>,<static variables>[,<end_time column>]
///   closures.csv   series_id,start,end   (optional)
/// `channel` holds the observed variable name. Empty fields are missing values;
/// categorical values are integer codes in [0, cardinality).
Dataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options = {});
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

// FNV-1a 64 over the regular files of `dir` (names and bytes, name order), as hex.
std::string directory_hash(const std::filesystem::path& dir);

// Minimal CSV handling: comma separated, optional double quotes around fields.
std::vector<std::string> split_csv_line(const std::string& line);
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

}  // namespace mrt
