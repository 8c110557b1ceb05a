#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ppd/analog_models.hpp"
#include "ppd/router_core.hpp"

#include <cmath>

using namespace ppd;

namespace {

WirelessLinkModel link_at(double gap_m, double offset_m = 0.0)
{
    WirelessLinkModel m;
    m.axial_gap = gap_m;
    m.lateral_offset = offset_m;
    return m;
}

// Explicit-Euler RC discharge: returns V after n steps.
double rc_discharge(double v0, double r, double c, double dt, long n)
{
    CapacitorState s{c, v0};
    for (long i = 0; i < n; ++i) s = step_capacitor(s, 0.0, s.voltage / r, dt);
    return s.voltage;
}

}  // namespace

TEST_CASE("step_capacitor examples")
{
    CHECK(step_capacitor({1e-3, 10.0}, 0.0, 0.0, 1e-5).voltage == doctest::Approx(10.0));
    CHECK(step_capacitor({1e-3, 10.0}, 0.0, 1.0, 1e-3).voltage == doctest::Approx(9.0));
    CHECK(step_capacitor({1e-3, 0.5}, 0.0, 10.0, 1e-3).voltage == 0.0);
}

TEST_CASE("RC discharge against the exponential oracle")
{
    const double r = 47.0, c = 1e-3, tau = r * c, v0 = 10.0;
    const double v = rc_discharge(v0, r, c, tau / 1000.0, 1000);
    const double exact = v0 * std::exp(-1.0);
    CHECK(std::abs(v - exact) / exact < 0.005);
}

TEST_CASE("RC discharge error is first order in dt")
{
    const double r = 47.0, c = 1e-3, tau = r * c, exact = 10.0 * std::exp(-1.0);
    const double e1 = std::abs(rc_discharge(10.0, r, c, tau / 500.0, 500) - exact);
    const double e2 = std::abs(rc_discharge(10.0, r, c, tau / 1000.0, 1000) - exact);
    CHECK(e2 < e1);
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("exchange_energy adds and removes energy")
{
    const CapacitorState s{1e-3, 10.0};
    const auto up = exchange_energy(s, 1.0, 1e-3);
    CHECK(up.energy() - s.energy() == doctest::Approx(1e-3));
    const auto down = exchange_energy(s, -1.0, 1e-3);
    CHECK(s.energy() - down.energy() == doctest::Approx(1e-3));
    CHECK(exchange_energy(s, -1e3, 1.0).voltage == 0.0);
}

TEST_CASE("wired_transfer_current examples")
{
    WiredLink diode{10.0, 0.6, true};
    CHECK(wired_transfer_current(10.0, 10.0, diode) == 0.0);
    CHECK(wired_transfer_current(15.0, 10.0, diode) == doctest::Approx(0.44));
    CHECK(wired_transfer_current(5.0, 10.0, diode) == 0.0);
    CHECK(wired_transfer_current(5.0, 10.0, WiredLink{1.0, 0.6, true}) == 0.0);

    const WiredLink plain{10.0, 0.0, false};
    CHECK(wired_transfer_current(5.0, 10.0, plain) == doctest::Approx(-0.5));
}

TEST_CASE("charge conservation on a diode-free two-capacitor transfer")
{
    const WiredLink plain{10.0, 0.0, false};
    auto run = [&](double dt) {
        CapacitorState a{1e-3, 12.0}, b{2e-3, 3.0};
        const double q0 = a.charge() + b.charge();
        const long n = std::lround(0.05 / dt);
        for (long i = 0; i < n; ++i) {
            const double i_ab = wired_transfer_current(a.voltage, b.voltage, plain);
            a = step_capacitor(a, 0.0, i_ab, dt);
            b = step_capacitor(b, i_ab, 0.0, dt);
        }
        return std::abs(a.charge() + b.charge() - q0) / q0;
    };
    const double e1 = run(1e-5), e2 = run(5e-6);
    CHECK(e1 < 1e-9);
    CHECK(e2 <= std::max(0.5 * e1, 1e-12));
}

TEST_CASE("envelope step: 90 percent at 25 us")
{
    const double tau = rise_time_constant();
    CHECK(tau == doctest::Approx(10.857e-6).epsilon(1e-3));
    const double y = envelope_step(0.0, 1.0, 25e-6, tau);
    CHECK(std::abs(y - 0.9) / 0.9 < 1e-3);
    CHECK(envelope_step(3.0, 3.0, 1e-6, tau) == 3.0);

    double z = 0.0;
    for (int i = 0; i < 1000; ++i) z = envelope_step(z, 1.0, 25e-9, tau);
    CHECK(std::abs(z - y) < 1e-6);
}

TEST_CASE("envelope converges monotonically")
{
    const double tau = rise_time_constant();
    double y = 0.0;
    for (int i = 0; i < 200; ++i) {
        const double next = envelope_step(y, 2.0, 1e-6, tau);
        CHECK(next >= y);
        CHECK(next <= 2.0);
        y = next;
    }
    for (int i = 0; i < 200; ++i) {
        const double next = envelope_step(y, 0.5, 1e-6, tau);
        CHECK(next <= y);
        CHECK(next >= 0.5);
        y = next;
    }
}

TEST_CASE("received power hits both calibration points and the cutoff")
{
    const WirelessLinkModel m;
    CHECK(received_power(link_at(0.05), m.reference_drive) == doctest::Approx(0.50));
    CHECK(received_power(link_at(0.10), m.reference_drive) == doctest::Approx(0.20));
    CHECK(received_power(link_at(0.25), m.reference_drive) == 0.0);
    CHECK(received_power(link_at(0.30), m.reference_drive) == 0.0);
    CHECK(received_power(link_at(0.05), 0.5 * m.reference_drive) == doctest::Approx(0.125));
}

TEST_CASE("single calibration point falls back to the physical coil radius")
{
    WirelessLinkModel m = link_at(0.10);
    m.calibration_points = {{0.05, 0.50}};
    CHECK(m.coupling_radius() == doctest::Approx(0.05));
    // ((r^2 + 50^2) / (r^2 + 100^2))^3 with r = 50 mm
    CHECK(m.coupling() == doctest::Approx(std::pow(0.4, 3)));
}

TEST_CASE("received power is non-increasing in gap and offset")
{
    const double drive = 9.0;
    double prev = received_power(link_at(0.0), drive);
    for (int mm = 1; mm <= 300; ++mm) {
        const double p = received_power(link_at(mm * 1e-3), drive);
        CHECK(p <= prev);
        CHECK(p >= 0.0);
        prev = p;
    }
    prev = received_power(link_at(0.05, 0.0), drive);
    for (int mm = 1; mm <= 200; ++mm) {
        const double p = received_power(link_at(0.05, mm * 1e-3), drive);
        CHECK(p <= prev);
        prev = p;
    }
}

TEST_CASE("received power never exceeds the transmitter draw")
{
    for (double gap : {0.0, 0.03, 0.05, 0.1, 0.2}) {
        const WirelessLinkModel m = link_at(gap);
        for (double v : {1.0, 5.0, 9.0, 15.0}) {
            const double p = received_power(m, v);
            CHECK(p <= transmitter_draw(p, v, m, 0.8));
        }
    }
    const WirelessLinkModel m = link_at(0.05);
    const double p = received_power(m, m.reference_drive);
    CHECK(p / transmitter_draw(p, m.reference_drive, m, 0.8) == doctest::Approx(0.8));
}

TEST_CASE("link model validation")
{
    WirelessLinkModel m;
    CHECK_NOTHROW(m.validate());
    m.envelope_time_constant = 0.0;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    m = {};
    m.calibration_points = {{0.05, 0.5}, {0.10, 0.6}};
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    m.calibration_points = {};
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
}

TEST_CASE("demodulator threshold")
{
    const DemodulatorConfig cfg;
    CHECK(demodulate_bit(1.0, 1.0, cfg));
    CHECK_FALSE(demodulate_bit(0.0, 1.0, cfg));
    CHECK(demodulate_bit(envelope_step(0.0, 1.0, 25e-6, rise_time_constant()), 1.0, cfg));
    CHECK_FALSE(demodulate_bit(0.49, 1.0, cfg));
    CHECK_NOTHROW(cfg.validate(10e3));
    CHECK_THROWS_AS(cfg.validate(200e3), std::invalid_argument);
    DemodulatorConfig bad;
    bad.decision_threshold_fraction = 1.0;
    CHECK_THROWS_AS(bad.validate(10e3), std::invalid_argument);
}

TEST_CASE("circuit constants are positive")
{
    const CircuitConstants k;
    CHECK(k.all_positive());
    CHECK(k.carrier_frequency == 1e6);
    CHECK(k.coupling_coefficient() > 0.0);
    CHECK(k.coupling_coefficient() < 1.0);
}
