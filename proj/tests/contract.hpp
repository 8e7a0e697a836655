// Copyright 2026 The kvevict Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Structural invariants every eviction run must satisfy.

#pragma once

#include <set>
#include <string>

#include "kvevict/kvevict.hpp"

namespace kvevict::testing {

struct ContractResult {
  std::size_t violations = 0;
  std::string first;
};

// |S_i| <= k, |S_i - S_{i-1}| <= 1, no token returns, and under h2o the
// floor(rho k) newest members of S_{i-1} + {i} are never the victim.
inline ContractResult check_contract(const AttentionTrace& trace, const PolicyConfig& p) {
  ContractResult r;
  auto bad = [&](const std::string& what) {
    if (r.violations++ == 0) r.first = what;
  };
  const SimulationRecord sim = run_policy(trace, p);
  std::set<TokenIndex> gone;
  std::vector<TokenIndex> prev;
  for (const StepRecord& st : sim.steps) {
    const auto& cur = st.tracked;
    if (cur.size() > p.budget) bad("budget at step " + std::to_string(st.step));
    std::size_t added = 0;
    for (TokenIndex t : cur) {
      if (!std::binary_search(prev.begin(), prev.end(), t)) ++added;
      if (gone.contains(t)) bad("token returned at step " + std::to_string(st.step));
    }
    if (added > 1) bad("two additions at step " + std::to_string(st.step));
    if (st.event.evicted) {
      gone.insert(*st.event.evicted);
      if (p.kind == PolicyKind::kH2O) {
        std::vector<TokenIndex> all = prev;
        all.push_back(st.step);
        const std::size_t w = p.recent_window();
        const std::set<TokenIndex> window(all.end() - static_cast<std::ptrdiff_t>(w), all.end());
        if (window.contains(*st.event.evicted)) bad("recent token evicted at step " + std::to_string(st.step));
      }
    }
    for (TokenIndex t : prev)
      if (!std::binary_search(cur.begin(), cur.end(), t) && st.event.evicted != t) bad("silent removal");
    prev = cur;
  }
  return r;
}

}  // namespace kvevict::testing
