#pragma once

// Dataset CSV and JSON plumbing. CSV header is id,r,z,y1,y0,x1..xd with the
// literal token NA for missing cells; parse failures carry 1-based line
// numbers.

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hte/estimands.hpp"
#include "hte/model.hpp"

namespace hte {

constexpr int kSchemaVersion = 1;

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> splitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::optional<double> parseCell(const std::string& cell, long lineNo,
                                       const std::string& column) {
  if (cell == "NA") return std::nullopt;
  try {
    std::size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(lineNo) + ": cannot parse " + column + " value '" +
                     cell + "'");
  }
}

inline std::string formatCell(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

}  // namespace detail

inline Dataset readDatasetCsv(const std::string& path,
                              StudySetup setup = StudySetup::RCT_ONE_SIDED,
                              bool requireNonNegativeOutcomes = false) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty dataset file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::splitCsvLine(line);
  if (header.size() < 6 || header[0] != "id" || header[1] != "r" || header[2] != "z" ||
      header[3] != "y1" || header[4] != "y0")
    throw ParseError("line 1: expected header id,r,z,y1,y0,x1..xd, got '" + line + "'");
  const int d = static_cast<int>(header.size()) - 5;
  for (int k = 0; k < d; ++k)
    if (header[static_cast<std::size_t>(5 + k)] != "x" + std::to_string(k + 1))
      throw ParseError("line 1: covariate column " + std::to_string(k + 1) +
                       " must be named x" + std::to_string(k + 1));

  Dataset data;
  data.d = d;
  data.setup = setup;
  long lineNo = 1;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::splitCsvLine(line);
    if (cells.size() != header.size())
      throw ParseError("line " + std::to_string(lineNo) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(cells.size()));
    UnitRecord u;
    const auto idCell = detail::parseCell(cells[0], lineNo, "id");
    if (!idCell) throw ParseError("line " + std::to_string(lineNo) + ": id may not be NA");
    u.id = static_cast<long>(*idCell);
    const auto rCell = detail::parseCell(cells[1], lineNo, "r");
    if (!rCell || (*rCell != 0.0 && *rCell != 1.0))
      throw ParseError("line " + std::to_string(lineNo) + ": r must be 0 or 1");
    u.r = static_cast<int>(*rCell);
    const auto zCell = detail::parseCell(cells[2], lineNo, "z");
    if (zCell) {
      if (*zCell != 0.0 && *zCell != 1.0)
        throw ParseError("line " + std::to_string(lineNo) + ": z must be 0, 1, or NA");
      u.z = static_cast<int>(*zCell);
    }
    u.y1 = detail::parseCell(cells[3], lineNo, "y1");
    u.y0 = detail::parseCell(cells[4], lineNo, "y0");
    if (requireNonNegativeOutcomes) {
      if ((u.y1 && *u.y1 < 0.0) || (u.y0 && *u.y0 < 0.0))
        throw ParseError("line " + std::to_string(lineNo) +
                         ": negative outcome not allowed in censored mode");
    }
    u.x.resize(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) {
      const auto xCell =
          detail::parseCell(cells[static_cast<std::size_t>(5 + k)], lineNo, header[static_cast<std::size_t>(5 + k)]);
      if (!xCell)
        throw ParseError("line " + std::to_string(lineNo) + ": covariates may not be NA");
      u.x[static_cast<std::size_t>(k)] = *xCell;
    }
    try {
      u.validate();
    } catch (const std::exception& e) {
      throw ParseError("line " + std::to_string(lineNo) + ": " + e.what());
    }
    data.units.push_back(std::move(u));
  }
  // No whole-dataset validate() here: the OBS_MACRO aux-moment invariant is
  // checked by the caller once moments have been attached.
  return data;
}

inline void writeDatasetCsv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open output file: " + path);
  out << "id,r,z,y1,y0";
  for (int k = 1; k <= data.d; ++k) out << ",x" << k;
  out << "\n";
  for (const auto& u : data.units) {
    out << u.id << "," << u.r << ",";
    out << (u.z ? std::to_string(*u.z) : std::string("NA"));
    out << "," << detail::formatCell(u.y1) << "," << detail::formatCell(u.y0);
    for (double xv : u.x) out << "," << detail::formatCell(xv);
    out << "\n";
  }
}

inline AuxiliaryMoments auxMomentsFromJson(const nlohmann::json& j) {
  for (const auto& [key, _] : j.items())
    if (key != "meanY0" && key != "meanX" && key != "probZ0" && key != "momentY0Sq")
      throw ParseError("auxiliary moments: unknown key '" + key + "'");
  AuxiliaryMoments aux;
  if (!j.contains("meanY0") || !j.contains("meanX") || !j.contains("probZ0"))
    throw ParseError("auxiliary moments: meanY0, meanX, probZ0 are required");
  aux.meanY0 = j.at("meanY0").get<double>();
  aux.meanX = j.at("meanX").get<std::vector<double>>();
  aux.probZ0 = j.at("probZ0").get<double>();
  if (j.contains("momentY0Sq")) aux.momentY0Sq = j.at("momentY0Sq").get<double>();
  aux.source = AuxiliaryMoments::Source::MACRO_GIVEN;
  return aux;
}

inline nlohmann::json auxMomentsToJson(const AuxiliaryMoments& aux) {
  nlohmann::json j{{"meanY0", aux.meanY0}, {"meanX", aux.meanX}, {"probZ0", aux.probZ0}};
  if (aux.momentY0Sq) j["momentY0Sq"] = *aux.momentY0Sq;
  return j;
}

inline void writeHteCurveCsv(const HteCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open output file: " + path);
  out << "y0,mean,lo95,hi95\n";
  out.precision(12);
  for (std::size_t i = 0; i < curve.grid.size(); ++i) {
    out << curve.grid[i] << ",";
    if (curve.flagged[i]) {
      out << "NA,NA,NA\n";
    } else {
      out << curve.mean[i] << "," << curve.lo95[i] << "," << curve.hi95[i] << "\n";
    }
  }
}

inline nlohmann::json summaryToJson(const EstimandSummary& s) {
  return {{"mean", s.mean}, {"sd", s.sd}, {"lo95", s.lo95}, {"hi95", s.hi95}};
}

}  // namespace hte
