#include "ulm/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ulm {

void emit_report_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  if (rows.empty()) throw std::invalid_argument("no result rows to emit");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "id,method,ppl,bs,rs,seconds\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.4f,%.4f", r.ppl, r.bs_rate, r.rs_rate, r.seconds);
    out << r.id << ',' << r.method << ',' << buf << '\n';
  }
}

void emit_report_json(const std::vector<ResultRow>& rows, const std::string& path) {
  if (rows.empty()) throw std::invalid_argument("no result rows to emit");
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows)
    arr.push_back({{"id", r.id},
                   {"method", r.method},
                   {"ppl", r.ppl},
                   {"bs", r.bs_rate},
                   {"rs", r.rs_rate},
                   {"seconds", r.seconds}});
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << arr.dump(2) << "\n";
}

std::vector<ResultRow> parse_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<ResultRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    ResultRow r;
    std::string field;
    std::getline(ss, r.id, ',');
    std::getline(ss, r.method, ',');
    std::getline(ss, field, ',');
    r.ppl = std::stod(field);
    std::getline(ss, field, ',');
    r.bs_rate = std::stod(field);
    std::getline(ss, field, ',');
    r.rs_rate = std::stod(field);
    std::getline(ss, field, ',');
    r.seconds = std::stod(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ResultRow> parse_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  nlohmann::json arr;
  in >> arr;
  std::vector<ResultRow> rows;
  for (const auto& e : arr) {
    ResultRow r;
    r.id = e.at("id").get<std::string>();
    r.method = e.at("method").get<std::string>();
    r.ppl = e.at("ppl").get<double>();
    r.bs_rate = e.at("bs").get<double>();
    r.rs_rate = e.at("rs").get<double>();
    r.seconds = e.at("seconds").get<double>();
    rows.push_back(std::move(r));
  }
  return rows;
}

std::pair<double, double> estimate_costs(double requests, double unit_cost,
                                         double finetune_fraction) {
  if (requests < 0.0) throw std::invalid_argument("request count must be >= 0");
  if (!(unit_cost > 0.0)) throw std::invalid_argument("unit cost must be > 0");
  if (finetune_fraction < 0.0) throw std::invalid_argument("fine-tune fraction must be >= 0");
  return {unit_cost * requests, unit_cost * (1.0 + finetune_fraction * requests)};
}

}  // namespace ulm
