#pragma once

#include <vector>

#include "guiagent/perception.hpp"

namespace oracle {

// Row-major reading order by repeated minimum selection: the smallest
// (top, left, bottom, right), earliest input position on ties.
inline std::vector<std::size_t> row_major_order(const std::vector<guiagent::ElementDescriptor>& elements) {
  std::vector<bool> taken(elements.size(), false);
  std::vector<std::size_t> order;
  for (std::size_t round = 0; round < elements.size(); ++round) {
    std::size_t best = elements.size();
    for (std::size_t i = 0; i < elements.size(); ++i) {
      if (taken[i]) continue;
      if (best == elements.size()) {
        best = i;
        continue;
      }
      const auto& a = elements[i].bounds;
      const auto& b = elements[best].bounds;
      bool less = a.top != b.top       ? a.top < b.top
                  : a.left != b.left   ? a.left < b.left
                  : a.bottom != b.bottom ? a.bottom < b.bottom
                                         : a.right < b.right;
      if (less) best = i;
    }
    taken[best] = true;
    order.push_back(best);
  }
  return order;
}

}  // namespace oracle
