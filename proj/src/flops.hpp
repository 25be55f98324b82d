#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace dac {

// Operation-count accounting.  Convention (documented in the README):
// a multiply-add counts as 2 FLOPs, plain adds/multiplies are booked in the
// multiply-add column at half weight, and exp/log/erf/sqrt/tanh count as
// 1 FLOP each.  Comparisons (incl. abs and branch tests on data) count 1.
struct FlopCounts {
  double muladd = 0.0;          // fused multiply-add units
  double transcendental = 0.0;  // exp, log, erf, sqrt, tanh
  double compare = 0.0;

  double total() const { return 2.0 * muladd + transcendental + compare; }
  FlopCounts& operator+=(const FlopCounts& o) {
    muladd += o.muladd;
    transcendental += o.transcendental;
    compare += o.compare;
    return *this;
  }
};

enum class FlopPhase { inference, update };

enum class FlopCategory : int {
  torso = 0,
  policy_head,
  value_head,
  policy_loss,
  value_loss,
  other,
  count
};

const char* flop_category_name(FlopCategory c);

// Counters are monotone within a phase; begin_phase resets that phase.
class FlopCounter {
 public:
  void begin_phase(FlopPhase phase);
  void add_muladd(double n);
  void add_transcendental(double n);
  void add_compare(double n);

  FlopCounts phase_total(FlopPhase phase) const;
  FlopCounts phase_category(FlopPhase phase, FlopCategory cat) const;

  FlopCategory category() const { return category_; }
  void set_category(FlopCategory cat) { category_ = cat; }

 private:
  std::array<std::array<FlopCounts, static_cast<int>(FlopCategory::count)>, 2>
      counts_{};
  FlopPhase phase_ = FlopPhase::inference;
  FlopCategory category_ = FlopCategory::other;
};

// Thread-local active counter; a null counter makes the hooks no-ops.
namespace flops {

FlopCounter* active();
void set_active(FlopCounter* counter);

void add_muladd(double n);
void add_transcendental(double n);
void add_compare(double n);

// RAII: activates a counter and opens a phase for its lifetime.
class PhaseScope {
 public:
  PhaseScope(FlopCounter& counter, FlopPhase phase);
  ~PhaseScope();

 private:
  FlopCounter* previous_;
};

// RAII: tags subsequent counts with a category.
class CategoryScope {
 public:
  explicit CategoryScope(FlopCategory cat);
  ~CategoryScope();

 private:
  FlopCategory previous_;
  bool armed_;
};

}  // namespace flops

}  // namespace dac
