#include "pcnet/tape.hpp"

#include <stdexcept>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

void Tape::record(std::string op, BackwardFn fn) {
    if (consumed_) throw std::logic_error("record on a tape that was already consumed by backward()");
    entries_.push_back({std::move(op), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
    if (consumed_) throw std::logic_error("tape reuse: backward() already ran on this tape");
    if (loss.numel() != 1) throw std::invalid_argument("backward() needs a scalar loss");
    consumed_ = true;
    if (!loss.requires_grad()) return;
    Tensor seed = loss;
    seed.grad()[0] += Real(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
    // closures hold the graph alive; release it now
    entries_.clear();
}

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape::Pause::Pause() : previous_(g_active_tape) { g_active_tape = nullptr; }
Tape::Pause::~Pause() { g_active_tape = previous_; }

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
