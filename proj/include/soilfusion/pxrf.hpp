#pragma once

// PXRF elemental data: recovery against certified reference materials,
// per-element average correction factors (ACF), and their application.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "soilfusion/csv.hpp"
#include "soilfusion/error.hpp"

namespace soilfusion {

enum class Element { Ca, K, Fe, Mn, Rb, Zr, Zn, Ti, Ba, Cr, Cu, Pb, Ni, Ag, Sn, V, Sr, Sb, Ga };

inline constexpr std::size_t kElementCount = 19;

inline constexpr std::array<Element, kElementCount> kElements{
    Element::Ca, Element::K,  Element::Fe, Element::Mn, Element::Rb, Element::Zr, Element::Zn,
    Element::Ti, Element::Ba, Element::Cr, Element::Cu, Element::Pb, Element::Ni, Element::Ag,
    Element::Sn, Element::V,  Element::Sr, Element::Sb, Element::Ga};

inline constexpr std::array<std::string_view, kElementCount> kElementNames{
    "Ca", "K", "Fe", "Mn", "Rb", "Zr", "Zn", "Ti", "Ba", "Cr", "Cu", "Pb", "Ni", "Ag", "Sn", "V", "Sr", "Sb", "Ga"};

constexpr std::size_t index_of(Element e) noexcept { return static_cast<std::size_t>(e); }
constexpr std::string_view name_of(Element e) noexcept { return kElementNames[index_of(e)]; }

inline Element parse_element(std::string_view name) {
  for (std::size_t i = 0; i < kElementCount; ++i) {
    if (kElementNames[i] == name) return kElements[i];
  }
  throw Error(ErrorKind::UnknownElement, "unknown element '" + std::string(name) + "'");
}

/// One sample's readings in mg/kg; nullopt marks a missing value.
struct PxrfRecord {
  std::string sample_id;
  std::array<std::optional<double>, kElementCount> concentrations{};

  std::optional<double>& operator[](Element e) { return concentrations[index_of(e)]; }
  const std::optional<double>& operator[](Element e) const { return concentrations[index_of(e)]; }

  friend bool operator==(const PxrfRecord&, const PxrfRecord&) = default;
};

struct CrmReading {
  double reported = 0;   // mg/kg
  double certified = 0;  // mg/kg
};

struct CrmScan {
  std::string crm_id;
  std::map<Element, CrmReading> readings;
};

inline double recovery_percent(double reported, double certified) {
  if (!(certified > 0)) throw Error(ErrorKind::NonPositiveCertified, "certified content must be positive");
  return 100.0 * reported / certified;
}

/// certified / reported; 0 marks an element the CRM scan did not detect.
inline double crm_correction_factor(double reported, double certified) {
  if (!(certified > 0)) throw Error(ErrorKind::NonPositiveCertified, "certified content must be positive");
  return reported > 0 ? certified / reported : 0.0;
}

/// Mean of the strictly positive per-CRM factors; 0 when none are positive.
inline double average_correction_factor(std::span<const double> per_crm) {
  double sum = 0;
  std::size_t n = 0;
  for (double f : per_crm) {
    if (f > 0) {
      sum += f;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

struct ElementCorrection {
  std::vector<double> per_crm;
  double acf = 0;
  bool correctable = false;
};

class CorrectionFactorTable {
 public:
  CorrectionFactorTable() = default;

  /// Installs an entry with the ACF computed as mean-of-nonzero.
  void set(Element e, std::vector<double> per_crm) {
    const double acf = average_correction_factor(per_crm);
    set(e, std::move(per_crm), acf);
  }

  /// Installs an entry with an explicit ACF (e.g. a published value).
  void set(Element e, std::vector<double> per_crm, double acf) {
    const bool correctable = std::any_of(per_crm.begin(), per_crm.end(), [](double f) { return f > 0; });
    entries_[index_of(e)] = ElementCorrection{std::move(per_crm), correctable ? acf : 0.0, correctable};
  }

  const std::optional<ElementCorrection>& entry(Element e) const { return entries_[index_of(e)]; }
  bool covers(Element e) const { return entries_[index_of(e)].has_value(); }

  std::size_t crm_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
      if (e) n = std::max(n, e->per_crm.size());
    }
    return n;
  }

  std::vector<std::string> crm_ids;

 private:
  std::array<std::optional<ElementCorrection>, kElementCount> entries_{};
};

/// Default per-CRM factors and averages. Ni carries 0.60, although the mean of
/// its nonzero factors is 0.697.
/// Zr, Sr, Sn and Sb have no factors and pass through uncorrected.
inline CorrectionFactorTable default_correction_table() {
  CorrectionFactorTable t;
  t.crm_ids = {"crm1", "crm2", "crm3", "crm4"};
  struct Row {
    Element e;
    std::array<double, 4> f;
    double acf;
  };
  const Row rows[] = {
      {Element::K, {1.01, 1.54, 0.91, 1.30}, 1.19},  {Element::Ca, {0.79, 1.25, 0.88, 1.34}, 1.06},
      {Element::Fe, {0.96, 1.26, 0.87, 1.19}, 1.07}, {Element::Mn, {0.92, 1.26, 0.59, 1.15}, 0.98},
      {Element::Rb, {0, 1.17, 0.27, 0}, 0.72},       {Element::Zn, {1.38, 1.28, 0.97, 1.16}, 1.20},
      {Element::Cu, {1.41, 1.29, 1.01, 1.15}, 1.22}, {Element::Cr, {0.87, 1.52, 0.36, 1.25}, 1.00},
      {Element::Ti, {1.03, 1.45, 3.25, 1.28}, 1.75}, {Element::Ni, {0, 0.48, 0.98, 0.63}, 0.60},
      {Element::Ag, {0, 0, 0.74, 0}, 0.74},          {Element::Ba, {0, 0.99, 1.16, 0.83}, 0.99},
      {Element::V, {0.80, 0.29, 0.47, 0.20}, 0.44},  {Element::Ga, {0, 0, 1.51, 1.72}, 1.62},
      {Element::Pb, {1.24, 1.16, 0.68, 0}, 1.03},
  };
  for (const auto& r : rows) t.set(r.e, {r.f.begin(), r.f.end()}, r.acf);
  for (Element e : {Element::Zr, Element::Sr, Element::Sn, Element::Sb}) t.set(e, {0, 0, 0, 0});
  return t;
}

/// Per-element factors from CRM scans, one column per scan in input order.
/// Elements absent from a scan get the 0 sentinel for that CRM, so an element
/// no scan reports ends up uncorrectable.
inline CorrectionFactorTable build_correction_table(std::span<const CrmScan> scans) {
  if (scans.empty()) throw Error(ErrorKind::EmptyInput, "no CRM scans supplied");
  CorrectionFactorTable t;
  for (const auto& s : scans) t.crm_ids.push_back(s.crm_id);
  for (Element e : kElements) {
    std::vector<double> factors;
    for (const auto& s : scans) {
      auto it = s.readings.find(e);
      if (it == s.readings.end()) {
        factors.push_back(0.0);
      } else {
        factors.push_back(crm_correction_factor(it->second.reported, it->second.certified));
      }
    }
    t.set(e, std::move(factors));
  }
  return t;
}

inline PxrfRecord apply_correction(const PxrfRecord& record, const CorrectionFactorTable& table) {
  PxrfRecord out = record;
  for (Element e : kElements) {
    auto& value = out[e];
    if (!value) continue;
    const auto& entry = table.entry(e);
    if (!entry) {
      throw Error(ErrorKind::UnknownElement, "correction table has no entry for " + std::string(name_of(e)) +
                                                 " (sample '" + record.sample_id + "')");
    }
    if (entry->correctable) *value *= entry->acf;
  }
  return out;
}

// CSV schemas --------------------------------------------------------------

/// crm_id, element, reported_mg_kg, certified_mg_kg
inline std::vector<CrmScan> read_crm_scans(const std::string& path) {
  const auto table = csv::read_file(path);
  const auto c_id = table.require("crm_id");
  const auto c_el = table.require("element");
  const auto c_rep = table.require("reported_mg_kg");
  const auto c_cert = table.require("certified_mg_kg");
  std::vector<CrmScan> scans;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path + ":" + std::to_string(r + 2);
    Element e;
    try {
      e = parse_element(row[c_el]);
    } catch (const Error&) {
      throw Error(ErrorKind::SchemaError, where + ": column 'element': unknown element '" + row[c_el] + "'");
    }
    const double reported = csv::parse_number(row[c_rep], where + ": column 'reported_mg_kg'");
    const double certified = csv::parse_number(row[c_cert], where + ": column 'certified_mg_kg'");
    if (!(certified > 0)) {
      throw Error(ErrorKind::NonPositiveCertified, where + ": column 'certified_mg_kg' must be positive");
    }
    if (reported < 0) throw Error(ErrorKind::SchemaError, where + ": column 'reported_mg_kg' is negative");
    auto it = std::find_if(scans.begin(), scans.end(), [&](const CrmScan& s) { return s.crm_id == row[c_id]; });
    if (it == scans.end()) {
      scans.push_back({row[c_id], {}});
      it = scans.end() - 1;
    }
    it->readings[e] = {reported, certified};
  }
  if (scans.empty()) throw Error(ErrorKind::EmptyInput, path + ": no CRM readings");
  return scans;
}

/// sample_id + the 19 element columns; blank = missing.
inline std::vector<PxrfRecord> read_pxrf(const std::string& path) {
  const auto table = csv::read_file(path);
  const auto c_id = table.require("sample_id");
  std::array<std::size_t, kElementCount> cols{};
  for (std::size_t i = 0; i < kElementCount; ++i) cols[i] = table.require(kElementNames[i]);
  for (const auto& h : table.header) {
    if (h == "sample_id") continue;
    if (std::find(kElementNames.begin(), kElementNames.end(), h) == kElementNames.end()) {
      throw Error(ErrorKind::SchemaError, path + ": unexpected column '" + h + "'");
    }
  }
  std::vector<PxrfRecord> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    PxrfRecord rec;
    rec.sample_id = row[c_id];
    for (std::size_t i = 0; i < kElementCount; ++i) {
      const std::string where = path + ":" + std::to_string(r + 2) + ": column '" + std::string(kElementNames[i]) + "'";
      auto v = csv::parse_optional_number(row[cols[i]], where);
      if (v && *v < 0) throw Error(ErrorKind::SchemaError, where + ": negative concentration");
      rec.concentrations[i] = v;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline void write_pxrf(const std::string& path, std::span<const PxrfRecord> records) {
  csv::Writer w(path);
  std::vector<std::string> header{"sample_id"};
  for (auto n : kElementNames) header.emplace_back(n);
  w.row(header);
  for (const auto& rec : records) {
    std::vector<std::string> row{rec.sample_id};
    for (const auto& v : rec.concentrations) row.push_back(v ? csv::format_number(*v) : "");
    w.row(row);
  }
  w.close();
}

/// element, crm1..crmN, acf, correctable
inline void write_acf(const std::string& path, const CorrectionFactorTable& table) {
  csv::Writer w(path);
  const std::size_t n = table.crm_count();
  std::vector<std::string> header{"element"};
  for (std::size_t i = 0; i < n; ++i) header.push_back("crm" + std::to_string(i + 1));
  header.insert(header.end(), {"acf", "correctable"});
  w.row(header);
  for (Element e : kElements) {
    const auto& entry = table.entry(e);
    if (!entry) continue;
    std::vector<std::string> row{std::string(name_of(e))};
    for (std::size_t i = 0; i < n; ++i) row.push_back(csv::format_number(i < entry->per_crm.size() ? entry->per_crm[i] : 0.0));
    row.push_back(csv::format_number(entry->acf));
    row.push_back(entry->correctable ? "true" : "false");
    w.row(row);
  }
  w.close();
}

}  // namespace soilfusion
