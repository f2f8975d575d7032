#ifndef ONET_QOT_HPP
#define ONET_QOT_HPP

#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "netmodel.hpp"

namespace onet::qot {

class EmptyRouteError : public Error {
  public:
    using Error::Error;
};

class UnknownModulationError : public Error {
  public:
    using Error::Error;
};

struct ChannelLaunch {
    std::size_t channel_index = 0;
    double power_w = 0.0;
};

/// Required GSNR per modulation format, dB.
struct ModulationThresholds {
    std::map<Modulation, double> required_gsnr_db{
        {Modulation::QPSK, 9.0}, {Modulation::QAM8, 12.0}, {Modulation::QAM16, 15.0}, {Modulation::QAM64, 21.0}};

    double at(Modulation m) const {
        auto it = required_gsnr_db.find(m);
        if (it == required_gsnr_db.end()) throw UnknownModulationError("no threshold for modulation " + to_string(m));
        return it->second;
    }

    /// Thresholds must rise with modulation order.
    bool ordered() const {
        double prev = -std::numeric_limits<double>::infinity();
        for (const auto& [m, v] : required_gsnr_db) {
            if (!(v > prev)) return false;
            prev = v;
        }
        return true;
    }
};

struct EffectiveLength {
    double l_eff_km = 0.0;
    double l_eff_asymptotic_km = 0.0;
};

/// Power attenuation coefficient in 1/km for a loss in dB/km.
inline double power_attenuation_per_km(double atten_db_per_km) { return atten_db_per_km * std::numbers::ln10 / 10.0; }

inline EffectiveLength effective_length(double atten_db_per_km, double length_km) {
    if (!(atten_db_per_km > 0) || !(length_km > 0))
        throw DomainError("effective_length: attenuation and length must be positive");
    const double a = power_attenuation_per_km(atten_db_per_km);
    // -expm1(-aL) keeps precision as L -> 0
    return {-std::expm1(-a * length_km) / a, 1.0 / a};
}

/// ASE power in `b_ref_hz` at the amplifier output: h*nu*NF*(G-1)*B_ref.
inline double ase_power(const Amplifier& amp, double center_freq_hz, double b_ref_hz) {
    if (!(b_ref_hz > 0)) throw DomainError("ase_power: b_ref_hz must be positive");
    const double g = units::db_to_lin(amp.gain_db);
    if (g < 1.0) throw DomainError("ase_power: amplifier " + amp.id + " has gain below 0 dB");
    return units::planck * center_freq_hz * units::db_to_lin(amp.nf_db) * (g - 1.0) * b_ref_hz;
}

/// Incoherent closed-form GN estimate of the NLI power generated in one span
/// for a channel launched at `launch.power_w`, referred to the span input.
inline double nli_power_span(const FiberSpan& span, const ChannelLaunch& launch, double b_ch_hz, double b_wdm_hz) {
    if (!(b_ch_hz > 0) || b_wdm_hz < b_ch_hz) throw DomainError("nli_power_span: need 0 < b_ch_hz <= b_wdm_hz");
    if (span.gamma_per_w_km == 0.0) return 0.0;
    const double beta2 = std::abs(span.beta2_ps2_per_km) * 1e-24;  // s^2/km
    if (beta2 == 0.0) throw DomainError("nli_power_span: span " + span.id + " has zero dispersion");
    const auto le = effective_length(span.atten_db_per_km, span.length_km);
    const double psd = launch.power_w / b_ch_hz;
    const double pi = std::numbers::pi;
    const double gamma = span.gamma_per_w_km;
    return 8.0 / 27.0 * gamma * gamma * le.l_eff_km * le.l_eff_km * psd * psd * psd * b_ch_hz *
           std::asinh(pi * pi / 2.0 * beta2 * le.l_eff_asymptotic_km * b_wdm_hz * b_wdm_hz) /
           (pi * beta2 * le.l_eff_asymptotic_km);
}

inline double margin(double gsnr_db, Modulation m, const ModulationThresholds& t) { return gsnr_db - t.at(m); }

inline double gsnr_db(double power_w, double ase_w, double nli_w) {
    return units::lin_to_db(power_w / (ase_w + nli_w));
}

struct LinkSnapshot {
    std::string link_id;
    double power_w = 0.0;
    double ase_w = 0.0;
    double nli_w = 0.0;
    double gsnr_db = 0.0;
    double margin_db = 0.0;
};

struct ChannelReport {
    std::size_t channel_index = 0;
    double center_thz = 0.0;
    double launch_power_w = 0.0;
    double power_w = 0.0;
    double ase_w = 0.0;
    double nli_w = 0.0;
    double gsnr_db = 0.0;
    double margin_db = 0.0;
    std::vector<LinkSnapshot> per_link;
};

struct GsnrReport {
    Modulation modulation = Modulation::QPSK;
    std::vector<ChannelReport> channels;
    std::vector<std::string> warnings;

    double min_margin_db() const {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& c : channels) m = std::min(m, c.margin_db);
        return m;
    }
};

/// Walks the route element by element: each span contributes NLI at its
/// input power and attenuates signal and noise; each amplifier scales all
/// three and adds its ASE. A snapshot is taken after every link.
inline GsnrReport estimate_gsnr(const std::vector<Link>& route, const std::vector<ChannelLaunch>& launches,
                                const SpectrumGrid& grid, const ModulationThresholds& thresholds,
                                Modulation modulation) {
    if (route.empty()) throw EmptyRouteError("estimate_gsnr: empty route");
    const auto channels = grid_channels(grid);
    const double b_ch = grid.symbol_rate_gbd * 1e9;
    const double b_wdm = total_wdm_bandwidth(grid);
    const double b_ref = grid.b_ref_ghz * 1e9;
    const double required = thresholds.at(modulation);

    GsnrReport report;
    report.modulation = modulation;
    std::set<std::string> warned;
    for (const auto& launch : launches) {
        if (launch.channel_index >= channels.size())
            throw DomainError("estimate_gsnr: channel " + std::to_string(launch.channel_index) + " not in grid");
        if (!(launch.power_w > 0)) throw DomainError("estimate_gsnr: launch power must be positive");
        const double freq_hz = channels[launch.channel_index].center_thz * 1e12;
        ChannelReport ch;
        ch.channel_index = launch.channel_index;
        ch.center_thz = channels[launch.channel_index].center_thz;
        ch.launch_power_w = launch.power_w;
        double sig = launch.power_w, ase = 0.0, nli = 0.0;
        for (const auto& link : route) {
            for (const auto& el : link.elements) {
                if (const auto* span = std::get_if<FiberSpan>(&el)) {
                    nli += nli_power_span(*span, {launch.channel_index, sig}, b_ch, b_wdm);
                    const double loss = units::db_to_lin(-span->loss_db());
                    sig *= loss;
                    ase *= loss;
                    nli *= loss;
                } else {
                    const auto& amp = std::get<Amplifier>(el);
                    const double g = units::db_to_lin(amp.gain_db);
                    sig *= g;
                    ase *= g;
                    nli *= g;
                    if (amp.gain_db < 0.0) {
                        if (warned.insert(amp.id).second)
                            report.warnings.push_back("amplifier " + amp.id + " attenuates; ASE clamped to 0");
                    } else {
                        ase += ase_power(amp, freq_hz, b_ref);
                    }
                }
            }
            const double g = (ase + nli) > 0 ? gsnr_db(sig, ase, nli) : std::numeric_limits<double>::infinity();
            ch.per_link.push_back({link.id, sig, ase, nli, g, g - required});
        }
        ch.power_w = sig;
        ch.ase_w = ase;
        ch.nli_w = nli;
        ch.gsnr_db = ch.per_link.back().gsnr_db;
        ch.margin_db = ch.gsnr_db - required;
        report.channels.push_back(std::move(ch));
    }
    return report;
}

inline json to_json(const GsnrReport& r) {
    json chans = json::array();
    for (const auto& c : r.channels) {
        json links = json::array();
        for (const auto& s : c.per_link)
            links.push_back({{"link_id", s.link_id},
                             {"power_w", s.power_w},
                             {"ase_w", s.ase_w},
                             {"nli_w", s.nli_w},
                             {"gsnr_db", s.gsnr_db},
                             {"margin_db", s.margin_db}});
        chans.push_back({{"channel_index", c.channel_index},
                         {"center_thz", c.center_thz},
                         {"launch_power_w", c.launch_power_w},
                         {"power_w", c.power_w},
                         {"ase_w", c.ase_w},
                         {"nli_w", c.nli_w},
                         {"gsnr_db", c.gsnr_db},
                         {"margin_db", c.margin_db},
                         {"per_link", links}});
    }
    return {{"modulation", to_string(r.modulation)}, {"channels", chans}, {"warnings", r.warnings}};
}

}  // namespace onet::qot

#endif  // ONET_QOT_HPP
