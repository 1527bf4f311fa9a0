#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "exnet/corpus.hpp"

namespace testing_support {

// Dataset over `edges` with bare institution records (no coordinates unless
// `located`).
inline exnet::SubjectAreaDataset make_dataset(std::vector<exnet::CollabEdge> edges, std::string subject = "S",
                                              bool located = false) {
  exnet::SubjectAreaDataset d;
  d.subject = std::move(subject);
  std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
    return std::tie(a.ref_id, a.net_id) < std::tie(b.ref_id, b.net_id);
  });
  d.edges = std::move(edges);
  std::set<std::string> refs, ids;
  for (const auto& e : d.edges) {
    refs.insert(e.ref_id);
    ids.insert(e.ref_id);
    ids.insert(e.net_id);
  }
  int k = 0;
  for (const auto& id : ids) {
    exnet::Institution inst;
    inst.id = id;
    inst.name = "Institution " + id;
    inst.country = (k % 2) ? "DEU" : "USA";
    if (located) inst.location = exnet::GeoPoint{-40.0 + 7.0 * (k % 12), -170.0 + 13.0 * (k % 26)};
    inst.is_reference = refs.count(id) > 0;
    d.institutions.push_back(inst);
    ++k;
  }
  return d;
}

inline std::string padded(std::size_t k, std::size_t width = 4) {
  std::string s = std::to_string(k);
  return std::string(width > s.size() ? width - s.size() : 0, '0') + s;
}

}  // namespace testing_support
