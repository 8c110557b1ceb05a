#include "ppd/sim_engine.hpp"

#include "ppd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace ppd {

// ---------------------------------------------------------------------------
// configuration

const RouterSpec& Topology::router(const std::string& id) const
{
    for (const auto& r : routers) {
        if (r.id == id) return r;
    }
    throw ValidationError("undefined router id '" + id + "'");
}

WirelessLinkModel Topology::link_model(const WirelessEdge& edge) const
{
    WirelessLinkModel m = wireless_params.model;
    m.axial_gap = edge.axial_gap;
    m.lateral_offset = edge.lateral_offset;
    return m;
}

void Topology::validate(const ControlConfig& control) const
{
    std::set<std::string> ids;
    std::set<std::uint8_t> addresses;
    for (const auto& r : routers) {
        if (r.id.empty()) throw ValidationError("router with empty id");
        if (!ids.insert(r.id).second) throw ValidationError("duplicate router id '" + r.id + "'");
        if (!addresses.insert(r.address.value()).second) {
            throw ValidationError("duplicate address " + r.address.to_bits() + " at router '" + r.id + "'");
        }
        if (r.source) {
            if (!control.supply_voltages.count(r.id)) {
                throw ValidationError("source router '" + r.id + "' has no supply voltage");
            }
            if (r.input != Section::None) throw ValidationError("source router '" + r.id + "' cannot have an input section");
        } else {
            if (!(r.capacitance > 0.0)) throw ValidationError("capacitance of '" + r.id + "' must be positive");
            if (!(r.initial_voltage >= 0.0)) throw ValidationError("initial voltage of '" + r.id + "' must be non-negative");
        }
        if (r.load_resistance && !(*r.load_resistance > 0.0)) {
            throw ValidationError("load resistance of '" + r.id + "' must be positive");
        }
    }
    auto need = [&](const std::string& id, const char* what) -> const RouterSpec& {
        if (!ids.count(id)) throw ValidationError(std::string(what) + " references undefined router id '" + id + "'");
        return router(id);
    };
    for (const auto& e : wired) {
        const auto& a = need(e.from, "wired link");
        const auto& b = need(e.to, "wired link");
        if (a.output != Section::Wired) throw ValidationError("wired link from '" + a.id + "' which has no wired output");
        if (b.input != Section::Wired) throw ValidationError("wired link into '" + b.id + "' which has no wired input");
        if (!(e.link.series_resistance > 0.0)) throw ValidationError("wired link series resistance must be positive");
        if (!(e.link.diode_drop >= 0.0)) throw ValidationError("wired link diode drop must be non-negative");
    }
    std::set<std::string> wireless_rx;
    for (const auto& e : wireless) {
        const auto& a = need(e.from, "wireless link");
        const auto& b = need(e.to, "wireless link");
        if (a.output != Section::Wireless) throw ValidationError("wireless link from '" + a.id + "' which is not a transmitter");
        if (b.input != Section::Wireless) throw ValidationError("wireless link into '" + b.id + "' which is not a receiver");
        if (!wireless_rx.insert(b.id).second) throw ValidationError("receiver '" + b.id + "' has more than one wireless link");
        if (!(e.axial_gap >= 0.0) || !(e.lateral_offset >= 0.0)) throw ValidationError("wireless geometry must be non-negative");
    }
    try {
        wireless_params.model.validate();
        wireless_params.demod.validate(1.0 / kDefaultBitWidth);
    } catch (const std::invalid_argument& ex) {
        throw ValidationError(ex.what());
    }
    if (!(wireless_params.efficiency > 0.0 && wireless_params.efficiency <= 1.0)) {
        throw ValidationError("wireless efficiency must be in (0, 1]");
    }
    for (const auto& s : load_schedule) {
        need(s.router, "load schedule");
        if (!(s.resistance > 0.0)) throw ValidationError("scheduled load resistance must be positive");
    }
    for (const auto& [id, list] : control.suppliers) {
        need(id, "suppliers");
        for (const auto& s : list) need(s, "suppliers");
    }
    for (const auto& [id, list] : control.priority) {
        need(id, "priority");
        for (const auto& s : list) need(s, "priority");
    }
    for (const auto& [id, sched] : control.schedules) {
        need(id, "schedule");
        for (const auto& s : sched.destinations) need(s, "schedule");
    }
    for (const auto& [id, v] : control.thresholds) need(id, "thresholds");
    for (const auto& [id, v] : control.output_floor) need(id, "output floor");
    for (const auto& [id, v] : control.supply_voltages) need(id, "supply voltages");
    try {
        control.validate();
    } catch (const std::invalid_argument& ex) {
        throw ValidationError(ex.what());
    }
}

void SimConfig::validate() const
{
    if (!(dt > 0.0) || dt > 10e-6 * (1.0 + 1e-9)) throw ConfigError("dt must be in (0, 10 us]");
    if (!(duration >= 0.0)) throw ConfigError("duration must be non-negative");
    if (!(bit_width > 0.0)) throw ConfigError("bit width must be positive");
    const double per_bit = bit_width / dt;
    if (std::abs(per_bit - std::round(per_bit)) > 1e-6 || std::round(per_bit) < 2.0) {
        throw ConfigError("bit width must be a whole multiple (>= 2) of dt");
    }
    if (!full_rate) {
        const double per_sample = sample_interval / dt;
        if (!(sample_interval > 0.0) || std::abs(per_sample - std::round(per_sample)) > 1e-6 || std::round(per_sample) < 1.0) {
            throw ConfigError("sample interval must be a whole multiple of dt");
        }
    }
}

long SimConfig::steps_per_bit() const { return std::lround(bit_width / dt); }

long SimConfig::steps_per_sample() const { return full_rate ? 1 : std::lround(sample_interval / dt); }

std::string_view to_string(PacketEventKind kind)
{
    switch (kind) {
    case PacketEventKind::Sent: return "sent";
    case PacketEventKind::Accepted: return "accepted";
    case PacketEventKind::Rejected: return "rejected";
    }
    return "?";
}

bool Trace::has_column(const std::string& name) const
{
    return std::find(columns.begin(), columns.end(), name) != columns.end();
}

const std::vector<double>& Trace::column(const std::string& name) const
{
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw std::out_of_range("trace has no column '" + name + "'");
    return series[static_cast<std::size_t>(it - columns.begin())];
}

// ---------------------------------------------------------------------------
// runtime state

namespace {

// Envelopes below this are treated as fully decayed (keeps values out of the
// subnormal range, where they would also slow the arithmetic down).
constexpr double kEnvelopeFloor = 1e-12;  // V

double settled(double envelope) { return std::abs(envelope) < kEnvelopeFloor ? 0.0 : envelope; }

struct Router {
    RouterSpec spec;
    double source_v = 0.0;
    CapacitorState storage;
    double load_r = 0.0;  // 0: no load
    std::optional<double> floor;
    std::optional<double> threshold;

    // output section
    bool out_active = false;
    long out_start = 0;
    Address out_dest;
    long slot_end = 0;  // no new frame before this tick (receivers count 100 bits)
    std::optional<long> out_pending_since;
    int sched_next = 0;
    int sched_sent = 0;
    std::vector<std::size_t> out_wired;     // edge indices
    std::vector<std::size_t> out_wireless;  // edge indices
    double tx_env = 0.0;

    // input section
    std::vector<std::size_t> in_wired;   // edge indices
    std::vector<WiredInputLine> lines;   // parallel to in_wired
    std::optional<std::size_t> in_wireless;
    WirelessReceiverState rx;
    RxMode active_mode = RxMode::HeaderListen;
    double env = 0.0;
    double demod = 0.0;
    double steady = 0.0;
    double coupling_amp = 0.0;

    // demand
    std::vector<std::size_t> suppliers;  // router indices, primary first
    std::vector<bool> demand;            // parallel to suppliers
    DemandSupervisor supervisor;
    FallbackDemandState fallback;

    // instantaneous, for trace
    bool s_in = false;
    bool s_out = false;
    double i_in = 0.0;
    double i_out = 0.0;
    double out_v = 0.0;
    double drive = 0.0;

    // energy since last sample
    double e_in = 0.0;
    double e_out = 0.0;
    double e_load = 0.0;

    bool has_storage() const { return !spec.source; }
    double v() const { return spec.source ? source_v : storage.voltage; }
    bool wireless_rx() const { return in_wireless.has_value(); }
    bool input_busy() const
    {
        for (const auto& l : lines) {
            if (l.frame_active && (!l.header_done || l.accepted)) return true;
        }
        if (wireless_rx()) {
            return rx.mode == RxMode::PayloadReceive || active_mode == RxMode::PayloadReceive ||
                   (rx.mode == RxMode::HeaderListen && rx.bit_counter > 0);
        }
        return false;
    }
};

struct Column {
    std::string name;
    std::function<double()> read;
};

}  // namespace

struct World::Impl {
    Topology topo;
    ControlConfig control;
    SimConfig sim;
    std::vector<Router> routers;
    std::unordered_map<std::string, std::size_t> index;
    std::vector<WirelessLinkModel> wireless_models;  // parallel to topo.wireless
    std::vector<LoadStep> loads;                     // sorted by time
    std::size_t next_load = 0;
    long n = 0;
    long spb = 100;
    long sample_steps = 10;
    long total_steps = 0;
    double since_sample = 0.0;
    std::vector<Column> columns;
    Trace trace;

    Impl(const Topology& t, const ControlConfig& c, const SimConfig& s);
    double now() const { return static_cast<double>(n) * sim.dt; }
    double tick_time(long k) const { return static_cast<double>(k) * sim.bit_width; }
    std::size_t idx(const std::string& id) const { return index.at(id); }

    bool demand_toward(std::size_t requester, std::size_t supplier) const
    {
        const auto& r = routers[requester];
        for (std::size_t i = 0; i < r.suppliers.size(); ++i) {
            if (r.suppliers[i] == supplier) return r.demand[i];
        }
        return false;
    }

    void on_tick(long k);
    void progress_frames(long k);
    void update_demands(long k);
    void issue_frames(long k);
    std::optional<std::size_t> desired_destination(std::size_t s, long k) const;
    void start_frame(std::size_t s, std::size_t dest, long k);
    void sample_receivers();
    void integrate();
    void build_columns();
    void sample_trace();
};

World::Impl::Impl(const Topology& t, const ControlConfig& c, const SimConfig& s) : topo(t), control(c), sim(s)
{
    sim.validate();
    topo.validate(control);
    spb = sim.steps_per_bit();
    sample_steps = sim.steps_per_sample();
    total_steps = std::lround(sim.duration / sim.dt);

    routers.reserve(topo.routers.size());
    for (std::size_t i = 0; i < topo.routers.size(); ++i) {
        const auto& spec = topo.routers[i];
        Router r;
        r.spec = spec;
        if (spec.source) r.source_v = control.supply_voltages.at(spec.id);
        r.storage = CapacitorState{spec.capacitance, spec.initial_voltage};
        r.load_r = spec.load_resistance.value_or(0.0);
        r.floor = control.floor(spec.id);
        if (auto it = control.thresholds.find(spec.id); it != control.thresholds.end()) r.threshold = it->second;
        r.rx.own_address = spec.address;
        routers.push_back(std::move(r));
        index.emplace(spec.id, i);
    }
    for (std::size_t e = 0; e < topo.wired.size(); ++e) {
        routers[idx(topo.wired[e].from)].out_wired.push_back(e);
        auto& to = routers[idx(topo.wired[e].to)];
        to.in_wired.push_back(e);
        to.lines.emplace_back();
    }
    for (std::size_t e = 0; e < topo.wireless.size(); ++e) {
        const auto& edge = topo.wireless[e];
        wireless_models.push_back(topo.link_model(edge));
        routers[idx(edge.from)].out_wireless.push_back(e);
        auto& rx = routers[idx(edge.to)];
        rx.in_wireless = e;
        const auto& m = wireless_models.back();
        rx.coupling_amp = std::sqrt(m.coupling());
        // Expected high level: nominal coupling at the transmitter's nominal drive.
        const auto& tx = routers[idx(edge.from)];
        double nominal = tx.spec.source ? tx.source_v : tx.floor.value_or(tx.threshold.value_or(tx.spec.initial_voltage));
        if (!(nominal > 0.0)) nominal = m.reference_drive;
        rx.steady = std::sqrt(m.nominal_coupling()) * nominal;
    }
    // Demand routing: explicit supplier lists, otherwise every upstream sender.
    for (std::size_t i = 0; i < routers.size(); ++i) {
        auto& r = routers[i];
        if (!r.threshold || r.spec.input == Section::None) continue;
        if (auto it = control.suppliers.find(r.spec.id); it != control.suppliers.end()) {
            for (const auto& sid : it->second) r.suppliers.push_back(idx(sid));
        } else {
            for (auto e : r.in_wired) r.suppliers.push_back(idx(topo.wired[e].from));
            if (r.in_wireless) r.suppliers.push_back(idx(topo.wireless[*r.in_wireless].from));
        }
        r.demand.assign(r.suppliers.size(), false);
    }
    loads = topo.load_schedule;
    std::stable_sort(loads.begin(), loads.end(), [](const LoadStep& a, const LoadStep& b) { return a.time < b.time; });

    trace.sample_interval = sim.full_rate ? sim.dt : sim.sample_interval;
    build_columns();
    if (total_steps > 0) sample_trace();
}

void World::Impl::build_columns()
{
    for (std::size_t i = 0; i < routers.size(); ++i) {
        Router* r = &routers[i];
        const std::string& id = r->spec.id;
        const double* interval = &since_sample;
        columns.push_back({id + ".V", [r] { return r->v(); }});
        if (r->spec.input != Section::None) {
            columns.push_back({id + ".S_" + id, [r] { return r->s_in ? 1.0 : 0.0; }});
            columns.push_back({id + ".I_in", [r] { return r->i_in; }});
            columns.push_back({id + ".P_in", [r, interval] { return *interval > 0 ? r->e_in / *interval : 0.0; }});
        }
        if (r->wireless_rx()) {
            columns.push_back({id + ".S_d", [r] { return switches_for(r->active_mode).demodulator ? 1.0 : 0.0; }});
            columns.push_back({id + ".mode", [r] { return static_cast<double>(static_cast<int>(r->active_mode)); }});
            columns.push_back({id + ".env", [r] { return r->env; }});
        }
        if (!r->suppliers.empty()) {
            columns.push_back({id + ".demand", [r] {
                                   return std::any_of(r->demand.begin(), r->demand.end(), [](bool b) { return b; }) ? 1.0 : 0.0;
                               }});
        }
        if (r->spec.output != Section::None) {
            columns.push_back({id + ".S_out", [r] { return r->s_out ? 1.0 : 0.0; }});
            columns.push_back({id + ".out", [r] { return r->out_v; }});
            columns.push_back({id + ".I_out", [r] { return r->i_out; }});
            columns.push_back({id + ".P_out", [r, interval] { return *interval > 0 ? r->e_out / *interval : 0.0; }});
        }
        if (r->load_r > 0.0 || std::any_of(loads.begin(), loads.end(), [&](const LoadStep& s) { return s.router == id; })) {
            columns.push_back({id + ".P_load", [r, interval] { return *interval > 0 ? r->e_load / *interval : 0.0; }});
        }
    }
    for (const auto& c : columns) trace.columns.push_back(c.name);
    trace.series.assign(columns.size(), {});
}

void World::Impl::sample_trace()
{
    trace.time.push_back(now());
    for (std::size_t c = 0; c < columns.size(); ++c) trace.series[c].push_back(columns[c].read());
    for (auto& r : routers) {
        r.e_in = r.e_out = r.e_load = 0.0;
    }
    since_sample = 0.0;
}

void World::Impl::progress_frames(long k)
{
    const double t = tick_time(k);
    for (std::size_t i = 0; i < routers.size(); ++i) {
        auto& r = routers[i];
        // wired input lines: header decision after slot 7, release after slot 100
        for (std::size_t l = 0; l < r.lines.size(); ++l) {
            auto& line = r.lines[l];
            if (!line.frame_active) continue;
            const long bit = k - line.start_tick;
            const auto& sender = routers[idx(topo.wired[r.in_wired[l]].from)];
            if (bit == static_cast<long>(kHeaderBits) && !line.header_done) {
                line.header_done = true;
                const BitFrame f = encode_frame(sender.out_dest, sim.bit_width);
                PacketEvent ev{t, sender.spec.id, r.spec.id, sender.out_dest, PacketEventKind::Rejected, 0.0};
                try {
                    line.accepted = wired_input_step(r.spec.address, std::span<const bool>(f.bits.data(), kHeaderBits)) &&
                                    !r.out_active;
                } catch (const SyncError&) {
                    line.accepted = false;
                }
                if (line.accepted) ev.kind = PacketEventKind::Accepted;
                trace.events.push_back(ev);
            }
            if (end_of_packet(static_cast<std::size_t>(bit))) line = WiredInputLine{};
        }
        // The output floor is re-checked every control tick during the payload;
        // dropping below it ends the packet early.
        const bool slot_over = r.out_active && end_of_packet(static_cast<std::size_t>(k - r.out_start));
        const bool starved = r.out_active && r.floor && r.has_storage() &&
                             k - r.out_start >= static_cast<long>(kHeaderBits) && r.storage.voltage < *r.floor;
        if (slot_over || starved) {
            r.out_active = false;
            if (r.wireless_rx()) {
                r.rx.mode = RxMode::HeaderListen;
                r.rx.bit_counter = 0;
                r.rx.previous_sample = true;
            }
        }
        if (r.wireless_rx()) r.active_mode = r.rx.mode;
    }
}

void World::Impl::update_demands(long k)
{
    const double t = tick_time(k);
    for (auto& r : routers) {
        if (r.suppliers.empty()) continue;
        const double v = r.storage.voltage;
        std::vector<bool> next(r.suppliers.size(), false);
        if (r.suppliers.size() >= 2) {
            const auto d = update_fallback_demand(r.fallback, v, *r.threshold, control.hysteresis, t, control.gamma_timeout);
            next[0] = d.to_primary;
            for (std::size_t i = 1; i < next.size(); ++i) next[i] = d.to_fallback;
        } else {
            next[0] = r.supervisor.update(v, *r.threshold, control.hysteresis);
        }
        // A router that is sending (or waiting to send) does not ask for input.
        if (r.out_active || r.out_pending_since) std::fill(next.begin(), next.end(), false);
        for (std::size_t i = 0; i < next.size(); ++i) {
            if (next[i] != r.demand[i]) {
                trace.demand_events.push_back({t, r.spec.id, routers[r.suppliers[i]].spec.id, next[i]});
                r.demand[i] = next[i];
            }
        }
    }
}

std::optional<std::size_t> World::Impl::desired_destination(std::size_t s, long k) const
{
    const auto& r = routers[s];
    if (r.spec.output == Section::None || r.out_active || k < r.slot_end) return std::nullopt;

    if (auto it = control.schedules.find(r.spec.id); it != control.schedules.end()) {
        const auto& sched = it->second;
        if (r.sched_sent >= sched.frames || tick_time(k) + 1e-12 < sched.start) return std::nullopt;
        return idx(sched.destinations[static_cast<std::size_t>(r.sched_next) % sched.destinations.size()]);
    }

    std::vector<std::size_t> candidates;
    if (auto it = control.priority.find(r.spec.id); it != control.priority.end()) {
        for (const auto& d : it->second) candidates.push_back(idx(d));
    } else {
        for (auto e : r.out_wired) candidates.push_back(idx(topo.wired[e].to));
        for (auto e : r.out_wireless) candidates.push_back(idx(topo.wireless[e].to));
    }
    // std::vector<bool> has no contiguous storage, so copy into a plain buffer.
    std::unique_ptr<bool[]> demands(new bool[candidates.size()]);
    for (std::size_t i = 0; i < candidates.size(); ++i) demands[i] = demand_toward(candidates[i], s);
    const auto pick = select_priority_destination(std::span<const bool>(demands.get(), candidates.size()));
    std::optional<std::size_t> chosen;
    if (pick) chosen = candidates[*pick];
    if (!chosen) return std::nullopt;
    if (r.has_storage()) {
        if (r.floor && !forwarder_may_issue(true, r.storage.voltage, *r.floor)) return std::nullopt;
        if (r.storage.voltage <= 0.0) return std::nullopt;
    }
    return chosen;
}

void World::Impl::start_frame(std::size_t s, std::size_t dest, long k)
{
    auto& r = routers[s];
    r.out_active = true;
    r.out_start = k;
    r.out_dest = routers[dest].spec.address;
    r.slot_end = k + static_cast<long>(kFrameBits);
    r.out_pending_since.reset();
    if (auto it = control.schedules.find(r.spec.id); it != control.schedules.end()) {
        ++r.sched_sent;
        ++r.sched_next;
    }
    trace.events.push_back({tick_time(k), r.spec.id, r.spec.id, r.out_dest, PacketEventKind::Sent, r.v()});
    for (auto e : r.out_wired) {
        auto& to = routers[idx(topo.wired[e].to)];
        for (std::size_t l = 0; l < to.in_wired.size(); ++l) {
            if (to.in_wired[l] == e) {
                to.lines[l] = WiredInputLine{true, false, false, k};
            }
        }
    }
    if (r.wireless_rx()) {
        r.rx.mode = RxMode::Idle;
        r.rx.bit_counter = 0;
        r.active_mode = RxMode::Idle;
    }
}

void World::Impl::issue_frames(long k)
{
    std::vector<std::optional<std::size_t>> desire(routers.size());
    for (std::size_t s = 0; s < routers.size(); ++s) desire[s] = desired_destination(s, k);

    std::vector<bool> grant(routers.size(), false);
    for (std::size_t s = 0; s < routers.size(); ++s) {
        auto& r = routers[s];
        if (!desire[s]) {
            r.out_pending_since.reset();
            continue;
        }
        if (r.spec.input == Section::None) {
            grant[s] = true;
            continue;
        }
        // New frames this router would hear starting on the same tick.
        bool incoming = false;
        for (std::size_t u = 0; u < routers.size() && !incoming; ++u) {
            if (u == s || !desire[u]) continue;
            for (auto e : routers[u].out_wired) {
                if (topo.wired[e].to == r.spec.id) incoming = true;
            }
            for (auto e : routers[u].out_wireless) {
                if (topo.wireless[e].to == r.spec.id && r.rx.mode == RxMode::HeaderListen) incoming = true;
            }
        }
        const IoRequest in_req{incoming, k};
        const IoRequest out_req{true, r.out_pending_since.value_or(k)};
        const auto res = enforce_no_simultaneous_io(r.input_busy(), r.out_active, in_req, out_req);
        if (res.start_output) {
            grant[s] = true;
        } else if (!r.out_pending_since) {
            r.out_pending_since = k;
        }
    }
    for (std::size_t s = 0; s < routers.size(); ++s) {
        if (grant[s]) start_frame(s, *desire[s], k);
    }
}

void World::Impl::on_tick(long k)
{
    const double t = tick_time(k);
    while (next_load < loads.size() && loads[next_load].time <= t + 1e-12) {
        routers[idx(loads[next_load].router)].load_r = loads[next_load].resistance;
        ++next_load;
    }
    progress_frames(k);
    update_demands(k);
    issue_frames(k);
}

void World::Impl::sample_receivers()
{
    const double t = now();
    for (auto& r : routers) {
        if (!r.wireless_rx() || r.rx.mode == RxMode::Idle) continue;
        const auto step = wireless_rx_step(r.rx, r.demod, r.steady, topo.wireless_params.demod);
        if (step.decision) {
            const auto& tx = routers[idx(topo.wireless[*r.in_wireless].from)];
            trace.events.push_back({t, tx.spec.id, r.spec.id, step.decision->decoded,
                                    step.decision->accepted ? PacketEventKind::Accepted : PacketEventKind::Rejected, 0.0});
        }
    }
}

void World::Impl::integrate()
{
    const double dt = sim.dt;
    const long k = n / spb;
    const auto& wp = topo.wireless_params;

    for (auto& r : routers) {
        r.i_in = r.i_out = 0.0;
        r.s_in = r.s_out = false;
        r.out_v = 0.0;
        r.drive = 0.0;
    }
    std::vector<double> p_in(routers.size(), 0.0), p_out(routers.size(), 0.0);
    std::vector<double> i_in(routers.size(), 0.0), i_out(routers.size(), 0.0);

    // Output gating for this step.
    for (auto& r : routers) {
        if (!r.out_active) continue;
        const auto bit = static_cast<std::size_t>(k - r.out_start);
        const bool high = encode_frame(r.out_dest).bits[bit];
        r.s_out = high;
        r.out_v = r.s_out ? r.v() : 0.0;
    }

    // Wired transfers.
    for (std::size_t i = 0; i < routers.size(); ++i) {
        auto& dst = routers[i];
        for (std::size_t l = 0; l < dst.lines.size(); ++l) {
            const auto& line = dst.lines[l];
            if (!line.switch_closed()) continue;
            dst.s_in = true;
            const auto& edge = topo.wired[dst.in_wired[l]];
            const std::size_t si = idx(edge.from);
            auto& src = routers[si];
            if (!src.out_active || src.out_start != line.start_tick) continue;
            const auto bit = static_cast<std::size_t>(k - src.out_start);
            const double cur = wired_output_step(bit, src.s_out, src.v(), dst.v(), edge.link, true);
            i_in[i] += cur;
            i_out[si] += cur;
            p_in[i] += dst.v() * cur;
            p_out[si] += src.v() * cur;
        }
    }

    // Wireless transfers.
    for (std::size_t ti = 0; ti < routers.size(); ++ti) {
        auto& tx = routers[ti];
        if (tx.out_wireless.empty()) continue;
        const double drive = wireless_tx_drive(tx.s_out, tx.v());
        tx.drive = drive;
        double delivered = 0.0;
        for (auto e : tx.out_wireless) {
            const std::size_t ri = idx(topo.wireless[e].to);
            auto& rx = routers[ri];
            const auto& model = wireless_models[e];
            const double p = rx.active_mode == RxMode::PayloadReceive
                                 ? model.calibration_points.front().power * (rx.env / model.reference_drive) *
                                       (rx.env / model.reference_drive)
                                 : 0.0;
            rx.s_in = rx.active_mode == RxMode::PayloadReceive;
            p_in[ri] += p;
            delivered += p;
        }
        const double draw = transmitter_draw(delivered, tx.tx_env, wp.model, wp.efficiency);
        p_out[ti] += draw;
        // Envelopes relax over the step toward the gated drive.
        tx.tx_env = settled(envelope_step(tx.tx_env, drive, dt, wp.model.envelope_time_constant));
        for (auto e : tx.out_wireless) {
            auto& rx = routers[idx(topo.wireless[e].to)];
            rx.env = settled(envelope_step(rx.env, rx.coupling_amp * drive, dt, wp.model.envelope_time_constant));
            rx.demod = settled(envelope_step(rx.demod, rx.env, dt, wp.demod.lowpass_time_constant()));
        }
    }

    // Storage integration and bookkeeping.
    for (std::size_t i = 0; i < routers.size(); ++i) {
        auto& r = routers[i];
        r.i_in = i_in[i];
        r.i_out = i_out[i];
        if (r.s_in && r.s_out) ++trace.switch_overlap_steps;
        if (r.spec.source) {
            r.e_out += p_out[i] * dt;
            continue;
        }
        const double v = r.storage.voltage;
        const double i_load = r.load_r > 0.0 ? v / r.load_r : 0.0;
        // Wireless draw and rectifier input are power-defined; wired terms are currents.
        const double wired_out_power = v * i_out[i];
        const double wireless_power = p_out[i] - wired_out_power;
        const double wired_in_power = v * i_in[i];
        const double rect_power = p_in[i] - wired_in_power;
        r.storage = step_capacitor(r.storage, i_in[i], i_out[i] + i_load, dt);
        r.storage = exchange_energy(r.storage, rect_power - wireless_power, dt);
        r.e_in += p_in[i] * dt;
        r.e_out += p_out[i] * dt;
        r.e_load += v * i_load * dt;
    }
}

// ---------------------------------------------------------------------------

World::World(const Topology& topology, const ControlConfig& control, const SimConfig& sim)
    : impl_(std::make_unique<Impl>(topology, control, sim))
{
}
World::~World() = default;
World::World(World&&) noexcept = default;
World& World::operator=(World&&) noexcept = default;

double World::time() const noexcept { return impl_->now(); }
long World::step_count() const noexcept { return impl_->n; }
double World::voltage(const std::string& router) const { return impl_->routers[impl_->idx(router)].v(); }
RxMode World::rx_mode(const std::string& router) const { return impl_->routers[impl_->idx(router)].active_mode; }
bool World::input_switch(const std::string& router) const { return impl_->routers[impl_->idx(router)].s_in; }
bool World::output_switch(const std::string& router) const { return impl_->routers[impl_->idx(router)].s_out; }
const Trace& World::trace() const noexcept { return impl_->trace; }
Trace World::take_trace()
{
    impl_->trace.duration = impl_->now();
    return std::move(impl_->trace);
}

void step(World& world, double dt)
{
    auto& w = *world.impl_;
    if (std::abs(dt - w.sim.dt) > 1e-15) throw ConfigError("step dt differs from the configured dt");
    if (w.n % w.spb == 0) w.on_tick(w.n / w.spb);      // (1) controllers
    if (w.n % w.spb == w.spb / 2) w.sample_receivers();  // (2) state machines
    w.integrate();                                       // (3) analog
    ++w.n;
    w.since_sample += dt;
    if (w.n % w.sample_steps == 0) w.sample_trace();  // (4) trace
}

Trace run(const Topology& topology, const ControlConfig& control, const SimConfig& sim)
{
    World world(topology, control, sim);
    const long total = std::lround(sim.duration / sim.dt);
    while (world.step_count() < total) step(world, sim.dt);
    Trace t = world.take_trace();
    t.duration = sim.duration;
    return t;
}

PowerSummary summarize_power(const Trace& trace, double window)
{
    if (window > trace.duration + 1e-12) {
        throw std::invalid_argument("summary window exceeds trace duration");
    }
    PowerSummary out;
    out.window = window;
    const double start = trace.duration - window;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < trace.time.size(); ++i) {
        if (trace.time[i] > start + 1e-12) rows.push_back(i);
    }
    auto mean = [&](const std::string& col) {
        if (!trace.has_column(col) || rows.empty()) return 0.0;
        const auto& s = trace.column(col);
        double acc = 0.0;
        for (auto i : rows) acc += s[i];
        return acc / static_cast<double>(rows.size());
    };
    for (const auto& c : trace.columns) {
        const auto dot = c.find('.');
        const std::string id = c.substr(0, dot);
        if (out.routers.count(id)) continue;
        out.routers[id] = RouterPower{mean(id + ".P_in"), mean(id + ".P_out"), mean(id + ".P_load")};
    }
    return out;
}

}  // namespace ppd
