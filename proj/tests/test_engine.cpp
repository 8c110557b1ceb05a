#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ppd/errors.hpp"
#include "ppd/scenario.hpp"
#include "ppd/sim_engine.hpp"

#include <cmath>

using namespace ppd;

namespace {

RouterSpec storage(const std::string& id, unsigned addr, double c, double v0, std::optional<double> load,
                   Section in, Section out)
{
    RouterSpec r;
    r.id = id;
    r.address = Address(addr);
    r.capacitance = c;
    r.initial_voltage = v0;
    r.load_resistance = load;
    r.input = in;
    r.output = out;
    return r;
}

// One wireless source and one unloaded receiver, a single scheduled frame.
Scenario one_frame_link()
{
    Scenario s;
    s.name = "one_frame";
    RouterSpec src;
    src.id = "src";
    src.address = Address(3);
    src.source = true;
    src.output = Section::Wireless;
    s.topology.routers = {src, storage("r1", 1, 1e-3, 0.0, std::nullopt, Section::Wireless, Section::None)};
    s.topology.wireless = {{"src", "r1", 0.05, 0.0}};
    s.control.supply_voltages = {{"src", 12.0}};
    s.control.schedules = {{"src", FrameSchedule{{"r1"}, 1, 0.0}}};
    s.sim.duration = 12e-3;
    return s;
}

double energy_change(const Trace& t, const std::string& id, double c)
{
    const auto& v = t.column(id + ".V");
    return 0.5 * c * (v.back() * v.back() - v.front() * v.front());
}

}  // namespace

TEST_CASE("empty topology only advances time")
{
    Topology topo;
    ControlConfig ctl;
    SimConfig sim;
    sim.duration = 1e-3;
    World w(topo, ctl, sim);
    for (int i = 0; i < 100; ++i) step(w, sim.dt);
    CHECK(w.time() == doctest::Approx(100e-6));
    CHECK(w.step_count() == 100);
}

TEST_CASE("single capacitor and load follow the RC oracle")
{
    Topology topo;
    topo.routers = {storage("c", 1, 10e-6, 10.0, 100.0, Section::None, Section::None)};
    ControlConfig ctl;
    SimConfig sim;
    sim.dt = 1e-6;  // RC / 1000
    World w(topo, ctl, sim);
    for (int i = 0; i < 1000; ++i) step(w, sim.dt);
    const double exact = 10.0 * std::exp(-1.0);
    CHECK(std::abs(w.voltage("c") - exact) / exact < 0.005);
}

TEST_CASE("step rejects a foreign dt")
{
    Topology topo;
    ControlConfig ctl;
    SimConfig sim;
    World w(topo, ctl, sim);
    CHECK_THROWS_AS(step(w, 2e-6), ConfigError);
}

TEST_CASE("SimConfig invariants")
{
    SimConfig s;
    CHECK_NOTHROW(s.validate());
    CHECK(s.steps_per_bit() == 100);
    CHECK(s.steps_per_sample() == 10);
    s.dt = 20e-6;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.dt = 3e-6;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.duration = -1.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);

    const Scenario sc = preset("sharing_case_i");
    SimConfig bad = sc.sim;
    bad.dt = 0.0;
    CHECK_THROWS_AS(run(sc.topology, sc.control, bad), ConfigError);
}

TEST_CASE("zero-duration run yields an empty trace")
{
    Scenario s = preset("sharing_case_i");
    s.sim.duration = 0.0;
    const Trace t = run(s.topology, s.control, s.sim);
    CHECK(t.size() == 0);
    CHECK(t.events.empty());
}

TEST_CASE("identical configs give identical traces")
{
    Scenario s = preset("sharing_case_i");
    s.sim.duration = 40e-3;
    const Trace a = run(s.topology, s.control, s.sim);
    const Trace b = run(s.topology, s.control, s.sim);
    CHECK(trace_csv(a) == trace_csv(b));
    CHECK(trace_json(a) == trace_json(b));
}

TEST_CASE("one frame: exactly one acceptance at the addressed receiver")
{
    Scenario s = selectivity_scenario();
    s.control.schedules.at("src").frames = 1;
    s.sim.duration = 15e-3;
    const Trace t = run(s.topology, s.control, s.sim);
    int sent = 0, accepted_r1 = 0, accepted_r2 = 0, rejected_r2 = 0;
    for (const auto& e : t.events) {
        sent += e.kind == PacketEventKind::Sent;
        if (e.kind == PacketEventKind::Accepted) (e.router == "r1" ? accepted_r1 : accepted_r2)++;
        if (e.kind == PacketEventKind::Rejected && e.router == "r2") ++rejected_r2;
    }
    CHECK(sent == 1);
    CHECK(accepted_r1 == 1);
    CHECK(accepted_r2 == 0);
    CHECK(rejected_r2 == 1);
}

TEST_CASE("receiver storage rises through the payload and not after it")
{
    const Scenario s = one_frame_link();
    World w(s.topology, s.control, s.sim);
    const long per_bit = s.sim.steps_per_bit();
    double prev = 0.0;
    for (long bit = 0; bit < 110; ++bit) {
        for (long k = 0; k < per_bit; ++k) step(w, s.sim.dt);
        const double v = w.voltage("r1");
        if (bit >= 8 && bit < 99) {
            CHECK(v > prev);
            CHECK(w.rx_mode("r1") == RxMode::PayloadReceive);
        }
        if (bit >= 101) CHECK(v == prev);
        prev = v;
    }
}

TEST_CASE("detached receiver takes no energy")
{
    Scenario s = one_frame_link();
    s.topology.routers.push_back(storage("r2", 2, 1e-3, 0.0, std::nullopt, Section::Wireless, Section::None));
    s.topology.wireless.push_back({"src", "r2", 0.05, 0.0});
    const Trace t = run(s.topology, s.control, s.sim);
    CHECK(t.column("r1.V").back() > 0.0);
    for (double v : t.column("r2.V")) CHECK(v == 0.0);
    for (double p : t.column("r2.P_in")) CHECK(p == 0.0);
}

TEST_CASE("trace sampling is uniform and starts at zero")
{
    Scenario s = preset("sharing_case_i");
    s.sim.duration = 5e-3;
    const Trace t = run(s.topology, s.control, s.sim);
    REQUIRE(t.size() > 2);
    CHECK(t.time.front() == 0.0);
    for (std::size_t i = 1; i < t.size(); ++i) CHECK(t.time[i] - t.time[i - 1] == doctest::Approx(s.sim.sample_interval));
    CHECK(t.has_column("rx.V"));
    CHECK(t.has_column("l2.V"));
    CHECK(t.has_column("rx.S_rx"));
    CHECK(t.has_column("m2.out"));
    CHECK_THROWS_AS(t.column("nope"), std::out_of_range);
}

TEST_CASE("energy bookkeeping closes for every storage router")
{
    Scenario s = preset("sharing_case_i");
    s.sim.duration = 0.1;
    const Trace t = run(s.topology, s.control, s.sim);
    const PowerSummary p = summarize_power(t, t.duration);
    for (const auto& r : s.topology.routers) {
        if (r.source) continue;
        CAPTURE(r.id);
        const auto& rp = p.routers.at(r.id);
        const double through = (rp.input + rp.output + rp.load) * t.duration;
        const double balance = (rp.input - rp.output - rp.load) * t.duration;
        CHECK(std::abs(balance - energy_change(t, r.id, r.capacitance)) <= 0.01 * through);
    }
}

TEST_CASE("summarize_power: idle network and window errors")
{
    Topology topo;
    RouterSpec c = storage("c", 1, 1e-3, 5.0, std::nullopt, Section::None, Section::None);
    topo.routers = {c};
    SimConfig sim;
    sim.duration = 10e-3;
    const Trace t = run(topo, ControlConfig{}, sim);
    const PowerSummary p = summarize_power(t, 10e-3);
    CHECK(p.routers.at("c").input == 0.0);
    CHECK(p.routers.at("c").output == 0.0);
    CHECK(p.routers.at("c").load == 0.0);
    CHECK_THROWS_AS(summarize_power(t, 1.0), std::invalid_argument);
}

TEST_CASE("topology validation names the offending id")
{
    Scenario s = preset("sharing_case_i");
    s.topology.wired.push_back({"m1", "ghost", WiredLink{}});
    try {
        s.topology.validate(s.control);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("ghost") != std::string::npos);
    }

    Scenario dup = preset("sharing_case_i");
    dup.topology.routers[1].address = dup.topology.routers[2].address;
    CHECK_THROWS_AS(dup.topology.validate(dup.control), ValidationError);

    Scenario cap = preset("sharing_case_i");
    cap.topology.routers[1].capacitance = 0.0;
    CHECK_THROWS_AS(cap.topology.validate(cap.control), ValidationError);

    Scenario wl = preset("sharing_case_i");
    wl.topology.wireless.front().to = "l2";
    CHECK_THROWS_AS(wl.topology.validate(wl.control), ValidationError);
}
