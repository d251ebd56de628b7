#include "feederopt/der.hpp"

namespace feederopt {

void Bess::validate() const {
  if (!(soc_min >= 0.0 && soc_min < soc_max && soc_max <= 1.0))
    throw ValidationError("bess " + id + ": SoC window invalid");
  if (!(eta > 0.0 && eta <= 1.0))
    throw ValidationError("bess " + id + ": efficiency outside (0,1]");
  if (e_start_kwh < soc_min * e_cap_kwh - 1e-9 ||
      e_start_kwh > soc_max * e_cap_kwh + 1e-9)
    throw ValidationError("bess " + id + ": e_start outside SoC window");
  if (p_max_kw < 0.0 || s_max_kva < 0.0 || e_cap_kwh <= 0.0)
    throw ValidationError("bess " + id + ": negative or zero rating");
}

double bess_energy_step(double e_prev_kwh, double p_ch_kw, double p_dis_kw,
                        double dt_h, const Bess& bess) {
  if (p_ch_kw < -1e-12 || p_dis_kw < -1e-12 || p_ch_kw > bess.p_max_kw + 1e-9 ||
      p_dis_kw > bess.p_max_kw + 1e-9)
    throw ValidationError("bess " + bess.id + ": power outside [0, p_max]");
  if (p_ch_kw > 1e-9 && p_dis_kw > 1e-9)
    throw ValidationError("bess " + bess.id +
                          ": simultaneous charge and discharge");
  double e = e_prev_kwh + (bess.eta * p_ch_kw - p_dis_kw / bess.eta) * dt_h;
  double lo = bess.soc_min * bess.e_cap_kwh;
  double hi = bess.soc_max * bess.e_cap_kwh;
  if (e < lo - 1e-9)
    throw ValidationError("bess " + bess.id + ": energy " + fmt_double(e) +
                          " kWh below SoC_min bound " + fmt_double(lo));
  if (e > hi + 1e-9)
    throw ValidationError("bess " + bess.id + ": energy " + fmt_double(e) +
                          " kWh above SoC_max bound " + fmt_double(hi));
  return e;
}

double bess_q_limit(double p_ch_kw, double p_dis_kw, const Bess& bess,
                    bool* clipped) {
  double p = std::max(p_ch_kw, p_dis_kw);
  if (clipped) *clipped = false;
  if (p >= bess.s_max_kva) {
    if (clipped) *clipped = true;
    return 0.0;
  }
  return std::sqrt(bess.s_max_kva * bess.s_max_kva - p * p);
}

ScheduleCheck flexload_schedule_check(const std::vector<int>& n_seq,
                                      const FlexLoad& flex,
                                      const std::vector<double>& base_kw) {
  ScheduleCheck r;
  int sum = 0;
  for (size_t t = 0; t < n_seq.size(); ++t) {
    int n = n_seq[t];
    if (n < -1 || n > 1)
      throw ValidationError("flexload " + flex.id + ": n outside {-1,0,1}");
    sum += n;
    if (t < base_kw.size() && base_kw[t] + n * flex.p_shift_kw < -1e-9) {
      r.valid = false;
      if (r.first_negative < 0) r.first_negative = static_cast<int>(t);
    }
  }
  if (sum != 0) {
    r.valid = false;
    r.residual = sum;
  }
  return r;
}

}  // namespace feederopt
