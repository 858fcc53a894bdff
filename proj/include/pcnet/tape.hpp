#pragma once

#include "pcnet/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

/// Ordered record of executed primitives for reverse-mode differentiation.
///
/// Primitives record onto the tape installed by the innermost Tape::Scope on
/// the calling thread. backward() replays the records in exact reverse order
/// and may be called once.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::string op, BackwardFn fn);

    /// Seeds d(loss)/d(loss) += 1 and accumulates into every tensor that
    /// requires grad. Throws std::logic_error on a second call.
    void backward(const Tensor& loss);

    std::size_t size() const { return entries_.size(); }
    bool consumed() const { return consumed_; }
    const std::string& op_name(std::size_t i) const { return entries_.at(i).op; }

    /// Tape receiving records on this thread, or nullptr.
    static Tape* active();

    class Scope {
    public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* previous_;
    };

    /// Suspends recording for its lifetime.
    class Pause {
    public:
        Pause();
        ~Pause();
        Pause(const Pause&) = delete;
        Pause& operator=(const Pause&) = delete;

    private:
        Tape* previous_;
    };

private:
    struct Entry {
        std::string op;
        BackwardFn backward;
    };
    std::vector<Entry> entries_;
    bool consumed_ = false;
};

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
