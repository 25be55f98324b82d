#include "flops.hpp"

namespace dac {

const char* flop_category_name(FlopCategory c) {
  switch (c) {
    case FlopCategory::torso: return "torso";
    case FlopCategory::policy_head: return "policy_head";
    case FlopCategory::value_head: return "value_head";
    case FlopCategory::policy_loss: return "policy_loss";
    case FlopCategory::value_loss: return "value_loss";
    default: return "other";
  }
}

void FlopCounter::begin_phase(FlopPhase phase) {
  phase_ = phase;
  for (auto& c : counts_[static_cast<int>(phase)]) c = FlopCounts{};
}

void FlopCounter::add_muladd(double n) {
  counts_[static_cast<int>(phase_)][static_cast<int>(category_)].muladd += n;
}

void FlopCounter::add_transcendental(double n) {
  counts_[static_cast<int>(phase_)][static_cast<int>(category_)]
      .transcendental += n;
}

void FlopCounter::add_compare(double n) {
  counts_[static_cast<int>(phase_)][static_cast<int>(category_)].compare += n;
}

FlopCounts FlopCounter::phase_total(FlopPhase phase) const {
  FlopCounts total;
  for (const auto& c : counts_[static_cast<int>(phase)]) total += c;
  return total;
}

FlopCounts FlopCounter::phase_category(FlopPhase phase,
                                       FlopCategory cat) const {
  return counts_[static_cast<int>(phase)][static_cast<int>(cat)];
}

namespace flops {

namespace {
thread_local FlopCounter* g_active = nullptr;
}

FlopCounter* active() { return g_active; }
void set_active(FlopCounter* counter) { g_active = counter; }

void add_muladd(double n) {
  if (g_active) g_active->add_muladd(n);
}
void add_transcendental(double n) {
  if (g_active) g_active->add_transcendental(n);
}
void add_compare(double n) {
  if (g_active) g_active->add_compare(n);
}

PhaseScope::PhaseScope(FlopCounter& counter, FlopPhase phase)
    : previous_(g_active) {
  g_active = &counter;
  counter.begin_phase(phase);
}

PhaseScope::~PhaseScope() { g_active = previous_; }

CategoryScope::CategoryScope(FlopCategory cat)
    : previous_(FlopCategory::other), armed_(g_active != nullptr) {
  if (armed_) {
    previous_ = g_active->category();
    g_active->set_category(cat);
  }
}

CategoryScope::~CategoryScope() {
  if (armed_ && g_active) g_active->set_category(previous_);
}

}  // namespace flops

}  // namespace dac
