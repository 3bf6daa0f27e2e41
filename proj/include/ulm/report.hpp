#pragma once

#include <string>
#include <vector>

namespace ulm {

struct ResultRow {
  std::string id;      // short method id, e.g. B1, R1, P1, G1, L1, D1
  std::string method;  // descriptive label
  double ppl = 0.0;
  double bs_rate = 0.0;
  double rs_rate = 0.0;
  double seconds = 0.0;
};

// Fixed column order (id, method, ppl, bs, rs, seconds); CSV floats at 4
// decimals, JSON at full precision.
void emit_report_csv(const std::vector<ResultRow>& rows, const std::string& path);
void emit_report_json(const std::vector<ResultRow>& rows, const std::string& path);

std::vector<ResultRow> parse_report_csv(const std::string& path);
std::vector<ResultRow> parse_report_json(const std::string& path);

// (U*v, U*(1 + f*v)): full-retraining versus teacher-backed fine-tuning cost
// for v deletion requests at unit full-training cost U.
std::pair<double, double> estimate_costs(double requests, double unit_cost,
                                         double finetune_fraction = 0.001);

}  // namespace ulm
