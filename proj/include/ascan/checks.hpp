#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ascan/config.hpp"

namespace ascan {

struct CheckItem {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct CheckSuite {
  std::string name;
  std::vector<CheckItem> items;
  bool passed() const;
};

// Property suites. All are seeded; every suite except `bench` prints the
// same text on every run.
CheckSuite check_config_counts();   // ablation layouts against published counts
CheckSuite check_variant_counts();  // T/B/L params and MACs, builder registry totals
CheckSuite check_unet_count();      // class-conditional unet size
CheckSuite check_gradients();       // primitives, blocks, a two-level unet through the loss
CheckSuite check_schedule();        // alpha-bar products, q_sample variance, resolution policy
CheckSuite check_guidance();        // cfg affinity, sampled endpoints, s = 1 trajectory
CheckSuite check_rope();            // rotary and qk-norm properties
CheckSuite check_toy_classifier();
CheckSuite check_toy_diffusion();
CheckSuite check_heun();
CheckSuite check_bench();  // timing based; details vary between runs

/// Two-level unet small enough for finite differences.
ArchSpec tiny_unet_spec();

/// "PASS name  detail" lines, then "suite: N/M passed".
std::string render_suite(const CheckSuite& s);

}  // namespace ascan
