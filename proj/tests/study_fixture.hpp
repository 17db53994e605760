#pragma once

#include <algorithm>
#include <cstdio>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "dive/human_study.hpp"

namespace dive::testing {

/// True when `targets` can still be split into `responders` rankings: every k models together
/// need between the k lowest and the k highest point values per responder.
inline bool totals_feasible(std::vector<int> targets, int responders) {
  const int n = static_cast<int>(targets.size());
  std::sort(targets.begin(), targets.end(), std::greater<>());
  int top = 0, bottom = 0, hi = 0, lo = 0;
  for (int k = 1; k <= n; ++k) {
    top += targets[k - 1];
    bottom += targets[n - k];
    hi += n + 1 - k;
    lo += k;
    if (top > responders * hi || bottom < responders * lo) return false;
  }
  return top == responders * hi;
}

/// `responders` full rankings whose per-model point totals equal `targets`. Each round takes the
/// first ranking (largest remaining need first, then the other orders) that keeps the rest feasible.
inline std::vector<std::vector<std::string>> rankings_for_totals(const std::vector<std::string>& models,
                                                                 std::vector<int> targets, int responders) {
  const int n = static_cast<int>(models.size());
  std::vector<std::vector<int>> chosen;
  auto search = [&](auto&& self, int left) -> bool {
    if (left == 0) return std::all_of(targets.begin(), targets.end(), [](int t) { return t == 0; });
    std::vector<int> order(models.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return targets[a] > targets[b]; });
    std::vector<int> perm(order.size());
    std::iota(perm.begin(), perm.end(), 0);
    do {
      std::vector<int> ranking;
      for (int p : perm) ranking.push_back(order[p]);
      for (int p = 0; p < n; ++p) targets[ranking[p]] -= n - p;
      if (totals_feasible(targets, left - 1)) {
        chosen.push_back(ranking);
        if (self(self, left - 1)) return true;
        chosen.pop_back();
      }
      for (int p = 0; p < n; ++p) targets[ranking[p]] += n - p;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return false;
  };
  if (!totals_feasible(targets, responders) || !search(search, responders))
    throw std::logic_error("rankings_for_totals: targets not reachable");
  std::vector<std::vector<std::string>> out;
  for (const auto& r : chosen) {
    std::vector<std::string> names;
    for (int m : r) names.push_back(models[m]);
    out.push_back(names);
  }
  return out;
}

struct StudyFixture {
  StudyConfig cfg;
  std::vector<RankingRecord> records;
};

inline std::string item_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "video_%02d", i);
  return buf;
}

/// 50 items, 20 volunteers, 4 models, overall dimension only. Items 1-3 are fully answered with
/// item scores (1.4, 3.0, 3.0, 2.6), (2.4, 3.2, 3.4, 1.0), (2.4, 3.2, 3.2, 1.2); the other 47 carry
/// 92 abstentions and bring the model totals to (99.8, 149.6, 127.6, 77).
inline StudyFixture overall_quality_fixture() {
  StudyFixture f;
  const std::vector<std::string> models{"M1", "M2", "M3", "M4"};
  f.cfg.study_id = "overall";
  for (const auto& m : models) f.cfg.models.push_back({m, {}});
  for (int i = 1; i <= 50; ++i) f.cfg.items.push_back(item_name(i));
  f.cfg.dimensions = {StudyDimension::Overall};
  f.cfg.n_volunteers_expected = 20;

  auto add = [&](int item, int volunteer, std::vector<std::string> ranking) {
    RankingRecord r{"vol_" + std::to_string(volunteer), item_name(item), StudyDimension::Overall, std::move(ranking),
                    false, "2024-01-01T00:00:00Z"};
    r.abstain = r.ranking.empty();
    f.records.push_back(std::move(r));
  };

  // Item scores times 20 volunteers.
  const std::vector<std::vector<int>> first_rows{{28, 60, 60, 52}, {48, 64, 68, 20}, {48, 64, 64, 24}};
  for (int i = 0; i < 3; ++i) {
    const auto rankings = rankings_for_totals(models, first_rows[i], 20);
    for (int v = 0; v < 20; ++v) add(i + 1, v + 1, rankings[v]);
  }

  std::vector<int> rest{1996, 2992, 2552, 1540};
  for (const auto& row : first_rows)
    for (std::size_t m = 0; m < 4; ++m) rest[m] -= row[m];
  // 47 * 20 slots, 92 abstentions: two per item on items 4..48, one on items 49 and 50.
  const auto rankings = rankings_for_totals(models, rest, 47 * 20 - 92);
  std::size_t next = 0;
  for (int item = 4; item <= 50; ++item) {
    const int abstain = item <= 48 ? 2 : 1;
    for (int v = 1; v <= 20; ++v) add(item, v, v <= abstain ? std::vector<std::string>{} : rankings.at(next++));
  }
  if (next != rankings.size()) throw std::logic_error("overall_quality_fixture: unused rankings");
  return f;
}

}  // namespace dive::testing
