#include "vprop/tensor.hpp"

namespace vprop {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

namespace detail {
void set_active_tape(Tape* tape) { g_active_tape = tape; }
}  // namespace detail

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::int64_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                         [](std::int64_t a, int b) { return a * b; });
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = previous_;
}

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

void Tape::replay() {
  replayed_ = true;
  // Ops recorded during replay would land on this tape; suspend recording.
  NoGradScope no_grad;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    (*it)();
    ++visited_;
  }
}

NoGradScope::NoGradScope() : saved_(g_active_tape) { g_active_tape = nullptr; }

NoGradScope::~NoGradScope() { g_active_tape = saved_; }

}  // namespace vprop
