#include "mmpt/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mmpt/errors.hpp"
#include "mmpt/rng.hpp"

namespace mmpt {

using nlohmann::json;

std::string splits_path(const std::string& data_path) {
  return data_path + ".splits.json";
}

std::vector<Crystal> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::DataError, "cannot open dataset: " + path);
  std::vector<Crystal> records;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      records.push_back(parse_crystal(line));
    } catch (const Error& e) {
      throw Error(e.kind(), path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (records.empty()) throw Error(ErrorKind::DataError, "empty dataset: " + path);
  return records;
}

void save_records(const std::vector<Crystal>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::DataError, "cannot write dataset: " + path);
  for (const Crystal& c : records) out << serialize_crystal(c) << "\n";
}

void validate_splits(const Splits& splits, size_t num_records) {
  std::set<int> seen;
  auto check = [&](const std::vector<int>& part, const char* name) {
    for (int i : part) {
      if (i < 0 || static_cast<size_t>(i) >= num_records)
        throw Error(ErrorKind::DataError, std::string("split index out of range in ") + name);
      if (!seen.insert(i).second)
        throw Error(ErrorKind::DataError, std::string("split index repeated: ") + std::to_string(i));
    }
  };
  check(splits.train, "train");
  check(splits.val, "val");
  check(splits.test, "test");
}

Splits load_splits(const std::string& path, size_t num_records) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::DataError, "cannot open split file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  json j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorKind::DataError, "malformed split file: " + path);
  Splits s;
  auto read = [&](const char* key, std::vector<int>& out) {
    if (!j.contains(key) || !j[key].is_array())
      throw Error(ErrorKind::DataError, std::string("split file missing array: ") + key);
    for (const auto& v : j[key]) {
      if (!v.is_number_integer())
        throw Error(ErrorKind::DataError, "split indices must be integers");
      out.push_back(v.get<int>());
    }
  };
  read("train", s.train);
  read("val", s.val);
  read("test", s.test);
  validate_splits(s, num_records);
  return s;
}

void save_splits(const Splits& splits, const std::string& path) {
  json j;
  j["train"] = splits.train;
  j["val"] = splits.val;
  j["test"] = splits.test;
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::DataError, "cannot write split file: " + path);
  out << j.dump() << "\n";
}

Splits default_splits(size_t num_records, uint64_t seed) {
  std::vector<int> idx(num_records);
  for (size_t i = 0; i < num_records; ++i) idx[i] = static_cast<int>(i);
  Rng rng = make_rng(seed, 0xda7a5e7ull);
  shuffle(rng, idx);
  size_t n_val = num_records / 10;
  size_t n_test = num_records / 10;
  size_t n_train = num_records - n_val - n_test;
  Splits s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<long>(n_train));
  s.val.assign(idx.begin() + static_cast<long>(n_train), idx.begin() + static_cast<long>(n_train + n_val));
  s.test.assign(idx.begin() + static_cast<long>(n_train + n_val), idx.end());
  return s;
}

Dataset load_dataset(const std::string& data_path) {
  Dataset d;
  d.records = load_records(data_path);
  std::string sp = splits_path(data_path);
  if (std::ifstream(sp).good()) {
    d.splits = load_splits(sp, d.records.size());
  } else {
    d.splits = default_splits(d.records.size(), 0);
  }
  return d;
}

}  // namespace mmpt
