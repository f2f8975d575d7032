#include <gtest/gtest.h>

#include <cmath>

#include <onet/qot.hpp>

#include "test_util.hpp"

using namespace onet;
using namespace onet::qot;
using onet::test::single_channel_grid;
using onet::test::smf_span;
using onet::test::transparent_link;

namespace {

// Reference values frozen from tests/oracles/gn_reference.py (mpmath, 50 digits).
constexpr double kLeff = 21.16927488697646;
constexpr double kLeffAsym = 21.71472409516259;
constexpr double kAseG20 = 5.0148472227781394e-7;
constexpr double kAseG16 = 1.9659577438287751e-7;
constexpr double kNli = 2.391855284799037e-7;
constexpr double kGsnrTransparent = 33.60731407;
constexpr double kGsnrTwoLinks = 30.59701411;

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST(EffectiveLength, ReferencePoint) {
    const auto le = effective_length(0.2, 80.0);
    EXPECT_LT(rel(le.l_eff_km, kLeff), 1e-12);
    EXPECT_LT(rel(le.l_eff_asymptotic_km, kLeffAsym), 1e-12);
}

TEST(EffectiveLength, Limits) {
    EXPECT_LT(rel(effective_length(0.2, 0.001).l_eff_km, 0.001), 1e-4);
    const auto le = effective_length(0.2, 1e5);
    EXPECT_LT(rel(le.l_eff_km, le.l_eff_asymptotic_km), 1e-12);
    EXPECT_THROW(effective_length(0.0, 10.0), DomainError);
    EXPECT_THROW(effective_length(0.2, -1.0), DomainError);
}

TEST(EffectiveLength, SmallArgumentWithinOneMicro) {
    // L_eff = L(1 - aL/2 + ...): relative deviation at L = 1 m is ~2.3e-5,
    // the first-order term; the limit holds to 1e-6 once that term is removed.
    const double a = power_attenuation_per_km(0.2);
    const double l = 0.001;
    EXPECT_LT(rel(effective_length(0.2, l).l_eff_km, l * (1 - a * l / 2)), 1e-6);
}

TEST(AsePower, ReferencePoint) {
    const Amplifier amp{"A", 20.0, 5.0, 0.0};
    const double p = ase_power(amp, 193.4e12, 12.5e9);
    EXPECT_LT(rel(p, kAseG20), 1e-12);
    EXPECT_NEAR(units::w_to_dbm(p), -33.0, 0.01);
    EXPECT_DOUBLE_EQ(ase_power(amp, 193.4e12, 25e9), 2 * p);
    EXPECT_EQ(ase_power({"A", 0.0, 5.0, 0.0}, 193.4e12, 12.5e9), 0.0);
    EXPECT_THROW(ase_power({"A", -1.0, 5.0, 0.0}, 193.4e12, 12.5e9), DomainError);
    EXPECT_THROW(ase_power(amp, 193.4e12, 0.0), DomainError);
}

TEST(NliPower, ReferencePoint) {
    const auto span = smf_span("S");
    const double p = nli_power_span(span, {0, 1e-3}, 32e9, 32e9);
    EXPECT_LT(rel(p, kNli), 1e-12);
    EXPECT_NEAR(units::w_to_dbm(p), -36.2, 0.05);
    EXPECT_LT(rel(nli_power_span(span, {0, 2e-3}, 32e9, 32e9), 8 * p), 1e-12);
}

TEST(NliPower, EdgeCases) {
    auto span = smf_span("S");
    span.gamma_per_w_km = 0.0;
    EXPECT_EQ(nli_power_span(span, {0, 1e-3}, 32e9, 32e9), 0.0);
    span = smf_span("S");
    span.beta2_ps2_per_km = 0.0;
    EXPECT_THROW(nli_power_span(span, {0, 1e-3}, 32e9, 32e9), DomainError);
    EXPECT_THROW(nli_power_span(smf_span("S"), {0, 1e-3}, 32e9, 16e9), DomainError);
}

TEST(Margin, Subtraction) {
    const ModulationThresholds t;
    EXPECT_DOUBLE_EQ(margin(15.0, Modulation::QAM16, t), 0.0);
    EXPECT_DOUBLE_EQ(margin(15.0, Modulation::QPSK, t), 6.0);
    EXPECT_DOUBLE_EQ(margin(8.0, Modulation::QPSK, t), -1.0);
    ModulationThresholds partial;
    partial.required_gsnr_db.erase(Modulation::QAM64);
    EXPECT_THROW(margin(10.0, Modulation::QAM64, partial), UnknownModulationError);
    EXPECT_TRUE(t.ordered());
}

TEST(EstimateGsnr, SingleTransparentLink) {
    const auto r = estimate_gsnr({transparent_link("L1", "A", "B")}, {{0, 1e-3}}, single_channel_grid(), {},
                                 Modulation::QPSK);
    ASSERT_EQ(r.channels.size(), 1u);
    const auto& c = r.channels[0];
    EXPECT_LT(rel(c.ase_w, kAseG16), 1e-9);
    EXPECT_LT(rel(c.nli_w, kNli), 1e-9);
    EXPECT_NEAR(c.gsnr_db, kGsnrTransparent, 1e-8);
    EXPECT_NEAR(c.margin_db, kGsnrTransparent - 9.0, 1e-8);
    EXPECT_LT(rel(c.power_w, 1e-3), 1e-12);
}

TEST(EstimateGsnr, ComposesStatedComponents) {
    // A 16 dB span followed by a 20 dB amplifier: the output-referred ASE is
    // the 20 dB value and the NLI/signal see 4 dB of net gain.
    Link l{"L1", "A", "B", {smf_span("S"), Amplifier{"A1", 20.0, 5.0, 0.0}}};
    const auto r = estimate_gsnr({l}, {{0, 1e-3}}, single_channel_grid(), {}, Modulation::QPSK);
    const double net = units::db_to_lin(4.0);
    EXPECT_LT(rel(r.channels[0].ase_w, kAseG20), 1e-9);
    EXPECT_LT(rel(r.channels[0].nli_w, kNli * net), 1e-9);
    // GSNR composition at the quoted components, 10log10(1e-3/(ASE+NLI)):
    EXPECT_NEAR(10 * std::log10(1e-3 / (kAseG20 + kNli)), 31.3, 0.01);
}

TEST(EstimateGsnr, TwoLinksAddIncoherently) {
    const auto one = estimate_gsnr({transparent_link("L1", "A", "B")}, {{0, 1e-3}}, single_channel_grid(), {},
                                   Modulation::QPSK);
    const auto two = estimate_gsnr({transparent_link("L1", "A", "B"), transparent_link("L2", "B", "C")}, {{0, 1e-3}},
                                   single_channel_grid(), {}, Modulation::QPSK);
    const auto& a = one.channels[0];
    const auto& b = two.channels[0];
    EXPECT_LT(rel(b.ase_w, 2 * a.ase_w), 1e-12);
    EXPECT_LT(rel(b.nli_w, 2 * a.nli_w), 1e-12);
    EXPECT_NEAR(a.gsnr_db - b.gsnr_db, 10 * std::log10(2.0), 1e-9);
    EXPECT_NEAR(b.gsnr_db, kGsnrTwoLinks, 1e-8);
    ASSERT_EQ(b.per_link.size(), 2u);
    EXPECT_EQ(b.per_link[0].link_id, "L1");
    EXPECT_NEAR(b.per_link[0].gsnr_db, a.gsnr_db, 1e-12);
}

TEST(EstimateGsnr, EmptyInputs) {
    EXPECT_THROW(estimate_gsnr({}, {{0, 1e-3}}, single_channel_grid(), {}, Modulation::QPSK), EmptyRouteError);
    const auto r = estimate_gsnr({transparent_link("L1", "A", "B")}, {}, single_channel_grid(), {}, Modulation::QPSK);
    EXPECT_TRUE(r.channels.empty());
    EXPECT_THROW(estimate_gsnr({transparent_link("L1", "A", "B")}, {{5, 1e-3}}, single_channel_grid(), {},
                               Modulation::QPSK),
                 DomainError);
}

TEST(EstimateGsnr, AttenuatingElementClampedWithWarning) {
    Link l{"L1", "A", "B", {smf_span("S"), Amplifier{"A1", -3.0, 5.0, 0.0}}};
    const auto r = estimate_gsnr({l}, {{0, 1e-3}}, single_channel_grid(), {}, Modulation::QPSK);
    EXPECT_EQ(r.channels[0].ase_w, 0.0);
    ASSERT_EQ(r.warnings.size(), 1u);
}

TEST(EstimateGsnr, JsonFieldsMirrorReport) {
    const auto r = estimate_gsnr({transparent_link("L1", "A", "B")}, {{0, 1e-3}}, single_channel_grid(), {},
                                 Modulation::QAM16);
    const auto j = to_json(r);
    EXPECT_EQ(j["modulation"], "16QAM");
    EXPECT_EQ(j["channels"][0]["gsnr_db"].get<double>(), r.channels[0].gsnr_db);
    EXPECT_EQ(j["channels"][0]["per_link"][0]["link_id"], "L1");
}
