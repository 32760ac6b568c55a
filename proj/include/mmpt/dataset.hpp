#pragma once

#include <string>
#include <vector>

#include "mmpt/crystal.hpp"

namespace mmpt {

struct Splits {
  std::vector<int> train, val, test;
};

struct Dataset {
  std::vector<Crystal> records;
  Splits splits;
};

// Records are newline-delimited JSON; splits live in "<path>.splits.json".
std::string splits_path(const std::string& data_path);

std::vector<Crystal> load_records(const std::string& path);
void save_records(const std::vector<Crystal>& records, const std::string& path);

// Throws on overlap, out-of-range indices, or duplicates within a split.
void validate_splits(const Splits& splits, size_t num_records);

Splits load_splits(const std::string& path, size_t num_records);
void save_splits(const Splits& splits, const std::string& path);

// Deterministic 80/10/10 partition of 0..n-1 shuffled by seed.
Splits default_splits(size_t num_records, uint64_t seed);

// Loads records plus the sibling split file; datasets without one get the
// seed-0 default partition.
Dataset load_dataset(const std::string& data_path);

}  // namespace mmpt
