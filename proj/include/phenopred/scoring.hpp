#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "phenopred/error.hpp"
#include "phenopred/tsv.hpp"

namespace phenopred::scoring {

enum class Instrument { CDC, SF36, MFI };

inline std::string to_string(Instrument i) {
  switch (i) {
    case Instrument::CDC: return "CDC";
    case Instrument::SF36: return "SF36";
    case Instrument::MFI: return "MFI";
  }
  return "?";
}

inline std::optional<Instrument> parse_instrument(std::string_view s) {
  s = tsv::trim(s);
  if (s == "CDC") return Instrument::CDC;
  if (s == "SF36") return Instrument::SF36;
  if (s == "MFI") return Instrument::MFI;
  return std::nullopt;
}

// CDC Symptom Inventory: the nine case-defining symptoms first, then the ten
// other illness-related symptoms.
inline constexpr std::array<std::string_view, 9> kCfsSymptoms = {
    "post_exertion_fatigue", "unrefreshing_sleep", "memory", "concentration", "muscle_pain",
    "joint_pain",            "sore_throat",        "tender_nodes", "headache"};
inline constexpr std::array<std::string_view, 10> kOtherCdcSymptoms = {
    "diarrhea", "fever", "chills", "sleep_problems", "nausea",
    "abdominal_pain", "sinus_nasal", "shortness_of_breath", "photophobia", "depression"};
inline constexpr std::array<std::string_view, 8> kSf36Items = {
    "physical_limitations", "social_limitations", "role_physical", "bodily_pain",
    "mental_health",        "role_emotional",     "vitality",      "general_health"};
inline constexpr std::array<std::string_view, 5> kMfiItems = {
    "general_fatigue", "physical_fatigue", "mental_fatigue", "reduced_motivation", "reduced_activity"};

inline std::size_t expected_item_count(Instrument i) {
  switch (i) {
    case Instrument::CDC: return kCfsSymptoms.size() + kOtherCdcSymptoms.size();
    case Instrument::SF36: return kSf36Items.size();
    case Instrument::MFI: return kMfiItems.size();
  }
  return 0;
}

// One inventory line. CDC items carry integer severity (0..3) and frequency
// (0..4) codes; SF36/MFI items carry a real item or subscale value.
struct SymptomItem {
  std::string symptom_id;
  int severity_code = 0;
  int frequency_code = 0;
  double value = 0.0;
};

struct SymptomRecord {
  std::string subject_id;
  Instrument instrument = Instrument::CDC;
  std::vector<SymptomItem> items;

  const SymptomItem* find(std::string_view id) const {
    for (const auto& it : items)
      if (it.symptom_id == id) return &it;
    return nullptr;
  }
};

struct PhenotypeDefinition {
  std::string name;
  Instrument instrument = Instrument::CDC;
  std::vector<std::string> symptom_subset;
};

template <std::size_t N>
std::vector<std::string> to_ids(const std::array<std::string_view, N>& a) {
  return {a.begin(), a.end()};
}

inline PhenotypeDefinition tot_score() {
  auto ids = to_ids(kCfsSymptoms);
  auto other = to_ids(kOtherCdcSymptoms);
  ids.insert(ids.end(), other.begin(), other.end());
  return {"TotScore", Instrument::CDC, std::move(ids)};
}
inline PhenotypeDefinition cfs_score() { return {"CFSScore", Instrument::CDC, to_ids(kCfsSymptoms)}; }
inline PhenotypeDefinition sf36_score() { return {"SF36", Instrument::SF36, to_ids(kSf36Items)}; }
inline PhenotypeDefinition mfi_score() { return {"MFI", Instrument::MFI, to_ids(kMfiItems)}; }

inline std::vector<PhenotypeDefinition> standard_definitions() {
  return {tot_score(), cfs_score(), sf36_score(), mfi_score()};
}

// Equidistant severity scale: not reported, mild, moderate, severe.
inline double transform_severity(int code) {
  switch (code) {
    case 0: return 0.0;
    case 1: return 1.0;
    case 2: return 2.5;
    case 3: return 4.0;
    default: throw InputError("severity code must be in 0..3, got " + std::to_string(code));
  }
}

inline void validate_item(Instrument instrument, const SymptomItem& item) {
  if (instrument != Instrument::CDC) {
    if (!std::isfinite(item.value)) throw InputError("item '" + item.symptom_id + "' has a non-finite value");
    return;
  }
  if (item.severity_code < 0 || item.severity_code > 3)
    throw InputError("item '" + item.symptom_id + "': severity code must be in 0..3");
  if (item.frequency_code < 0 || item.frequency_code > 4)
    throw InputError("item '" + item.symptom_id + "': frequency code must be in 0..4");
  if ((item.severity_code == 0) != (item.frequency_code == 0))
    throw InputError("item '" + item.symptom_id + "': severity and frequency must both be 0 or both be non-zero");
}

// CDC: sum over the subset of transformed severity times frequency.
// SF36/MFI: plain sum of the item values.
inline double compute_symptom_score(const SymptomRecord& record, const PhenotypeDefinition& def) {
  if (record.instrument != def.instrument)
    throw InputError("definition '" + def.name + "' needs a " + to_string(def.instrument) + " record, got " +
                     to_string(record.instrument));
  double score = 0.0;
  for (const auto& id : def.symptom_subset) {
    const auto* item = record.find(id);
    if (!item)
      throw InputError("subject '" + record.subject_id + "': " + to_string(record.instrument) +
                       " record lacks symptom '" + id + "'");
    validate_item(record.instrument, *item);
    if (record.instrument == Instrument::CDC)
      score += transform_severity(item->severity_code) * item->frequency_code;
    else
      score += item->value;
  }
  return score;
}

struct PhenotypeTable {
  std::vector<std::string> subject_ids;
  std::vector<std::pair<std::string, Eigen::VectorXd>> columns;  // in definition order
};

// Scores every subject under each definition. Subject order is the order of
// first appearance in `records` unless `subject_order` is given.
inline PhenotypeTable derive_phenotypes(const std::vector<SymptomRecord>& records,
                                        const std::vector<PhenotypeDefinition>& definitions = standard_definitions(),
                                        std::optional<std::vector<std::string>> subject_order = std::nullopt) {
  std::vector<std::string> order;
  std::map<std::pair<std::string, Instrument>, const SymptomRecord*> by_key;
  for (const auto& r : records) {
    auto [it, inserted] = by_key.try_emplace({r.subject_id, r.instrument}, &r);
    if (!inserted)
      throw InputError("subject '" + r.subject_id + "' has more than one " + to_string(r.instrument) + " record");
    if (!subject_order && std::find(order.begin(), order.end(), r.subject_id) == order.end())
      order.push_back(r.subject_id);
  }
  if (subject_order) order = *subject_order;

  PhenotypeTable table;
  table.subject_ids = order;
  const auto n = static_cast<Eigen::Index>(order.size());
  for (const auto& def : definitions) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& sid = order[static_cast<std::size_t>(i)];
      auto it = by_key.find({sid, def.instrument});
      if (it == by_key.end())
        throw InputError("subject '" + sid + "' has no " + to_string(def.instrument) + " record (needed by " +
                         def.name + ")");
      v(i) = compute_symptom_score(*it->second, def);
    }
    table.columns.emplace_back(def.name, std::move(v));
  }
  return table;
}

// Symptom TSV with header
//   subject_id  instrument  symptom_id  severity_code  frequency_code
// For SF36/MFI rows the item value is read from the severity_code column and
// frequency_code must be empty or 0.
inline std::vector<SymptomRecord> load_symptom_tsv(const std::string& path) {
  auto lines = tsv::read_lines(path);
  while (!lines.empty() && tsv::is_blank(lines.back())) lines.pop_back();
  if (lines.empty()) throw InputError(path + ": empty symptom file");
  const auto header = tsv::split(lines[0]);
  const std::vector<std::string> expected = {"subject_id", "instrument", "symptom_id", "severity_code",
                                             "frequency_code"};
  if (header.size() != expected.size() || !std::equal(header.begin(), header.end(), expected.begin(),
                                                      [](const auto& a, const auto& b) { return tsv::trim(a) == b; }))
    throw InputError(path + ":1: header must be subject_id, instrument, symptom_id, severity_code, frequency_code");

  std::vector<SymptomRecord> records;
  std::map<std::pair<std::string, Instrument>, std::size_t> slot;
  std::map<std::pair<std::string, Instrument>, std::set<std::string>> seen_items;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::string where = path + ":" + std::to_string(li + 1) + ": ";
    if (tsv::is_blank(lines[li])) throw InputError(where + "blank line");
    auto f = tsv::split(lines[li]);
    if (f.size() != 5) throw InputError(where + "expected 5 fields, got " + std::to_string(f.size()));
    auto instrument = parse_instrument(f[1]);
    if (!instrument) throw InputError(where + "unknown instrument '" + f[1] + "'");
    SymptomItem item;
    item.symptom_id = std::string(tsv::trim(f[2]));
    if (item.symptom_id.empty()) throw InputError(where + "empty symptom id");
    if (*instrument == Instrument::CDC) {
      auto sev = tsv::parse_int(f[3]);
      auto freq = tsv::parse_int(f[4]);
      if (!sev || !freq) throw InputError(where + "severity and frequency codes must be integers");
      item.severity_code = static_cast<int>(*sev);
      item.frequency_code = static_cast<int>(*freq);
    } else {
      auto v = tsv::parse_real(f[3]);
      if (!v) throw InputError(where + "item value must be a finite real");
      item.value = *v;
      auto fr = tsv::trim(f[4]);
      if (!fr.empty() && fr != "0") throw InputError(where + "frequency_code must be empty or 0 for " + f[1]);
    }
    try {
      validate_item(*instrument, item);
    } catch (const InputError& e) {
      throw InputError(where + e.what());
    }
    const std::string sid(tsv::trim(f[0]));
    auto key = std::make_pair(sid, *instrument);
    if (!seen_items[key].insert(item.symptom_id).second)
      throw InputError(where + "duplicate symptom '" + item.symptom_id + "' for subject '" + sid + "'");
    auto [it, inserted] = slot.try_emplace(key, records.size());
    if (inserted) records.push_back(SymptomRecord{sid, *instrument, {}});
    records[it->second].items.push_back(std::move(item));
  }
  return records;
}

// Checks each record carries exactly the instrument's standard item list.
inline void check_complete(const SymptomRecord& r) {
  const auto want = expected_item_count(r.instrument);
  if (r.items.size() != want)
    throw InputError("subject '" + r.subject_id + "': " + to_string(r.instrument) + " record has " +
                     std::to_string(r.items.size()) + " items, expected " + std::to_string(want));
}

}  // namespace phenopred::scoring
