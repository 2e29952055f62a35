#pragma once

// JSON dump of the oracle's intermediates, for golden files.

#include "json.hpp"

#include "pgsp/oracle.hpp"

namespace pgsp::oracle {

inline nlohmann::json to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < m.cols; ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json to_json(const DenseModel& dm) {
  return {{"m", dm.m},
          {"n", dm.n},
          {"r", to_json(dm.r)},
          {"s_ui", to_json(dm.s_ui)},
          {"s_u", to_json(dm.s_u)},
          {"s_i", to_json(dm.s_i)},
          {"a", to_json(dm.a)},
          {"eigenvalues_a", dm.eigenvalues_a},
          {"r_tilde", to_json(dm.r_tilde)},
          {"col_degrees", dm.col_degrees},
          {"r_hat", to_json(dm.r_hat)}};
}

}  // namespace pgsp::oracle
