#include <sstream>

#include "ascan/analysis.hpp"
#include "ascan/classifier.hpp"
#include "ascan/diffusion.hpp"
#include "common.hpp"

namespace ascan {

using checks_detail::fmt;

namespace {

CheckItem row_item(const ReconcileRow& r) {
  const double unit = r.metric == "macs" ? 1e9 : 1e6;
  const char* u = r.metric == "macs" ? "G" : "M";
  return {r.name + " " + r.metric, r.pass,
          fmt("expected %.1f%s actual %.2f%s rel %+.2f%% tol %.0f%%", r.expected / unit, u, r.actual / unit, u,
              100 * r.rel_error, 100 * r.tol)};
}

CheckSuite reconcile_where(const std::string& suite, const std::function<bool(const PaperValue&)>& keep) {
  CheckSuite s{suite, {}};
  std::vector<PaperValue> vals;
  for (const auto& v : paper_values())
    if (keep(v)) vals.push_back(v);
  for (const auto& r : reconcile_presets(vals)) s.items.push_back(row_item(r));
  return s;
}

bool ablation(const std::string& name) { return ablation_layout(name).has_value(); }

}  // namespace

bool CheckSuite::passed() const {
  for (const auto& i : items)
    if (!i.pass) return false;
  return !items.empty();
}

std::string render_suite(const CheckSuite& s) {
  std::ostringstream out;
  int ok = 0;
  for (const auto& i : s.items) {
    out << (i.pass ? "PASS " : "FAIL ") << s.name << ": " << i.name;
    if (!i.detail.empty()) out << "  " << i.detail;
    out << "\n";
    ok += i.pass;
  }
  out << s.name << ": " << ok << "/" << s.items.size() << " passed\n";
  return out.str();
}

CheckSuite check_config_counts() {
  return reconcile_where("counts.configs", [](const PaperValue& v) { return ablation(v.name); });
}

CheckSuite check_variant_counts() {
  auto s = reconcile_where("counts.variants", [](const PaperValue& v) { return v.name.rfind("ascan-", 0) == 0; });
  for (const char* name : {"ascan-t", "ascan-b", "ascan-l"}) {
    const ArchSpec spec = build_preset(name);
    const auto registry = build_meta_model(spec)->parameter_count();
    const auto analytic = count_params(spec).total_params;
    s.items.push_back({std::string(name) + " registry", registry == analytic,
                       fmt("builder %lld analytic %lld", static_cast<long long>(registry),
                           static_cast<long long>(analytic))});
  }
  return s;
}

CheckSuite check_unet_count() {
  auto s = reconcile_where("counts.unet", [](const PaperValue& v) { return v.name.rfind("unet-", 0) == 0; });
  const ArchSpec spec = build_preset("unet-class-cond");
  const auto registry = build_meta_diffusion_model(spec)->parameter_count();
  const auto analytic = count_params(spec).total_params;
  s.items.push_back({"unet-class-cond registry", registry == analytic,
                     fmt("builder %lld analytic %lld", static_cast<long long>(registry),
                         static_cast<long long>(analytic))});
  return s;
}

}  // namespace ascan
