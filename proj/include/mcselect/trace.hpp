#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mcselect {

// Sample path of a single chain plus a fingerprint of the run that made it.
template <class State>
struct Trace {
  std::vector<State> states;
  std::string meta;

  std::size_t size() const { return states.size(); }
  bool empty() const { return states.empty(); }
  const State& operator[](std::size_t i) const { return states[i]; }
};

}  // namespace mcselect
