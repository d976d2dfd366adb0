#include <popnet/workload.hpp>

#include "json_codec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace popnet {

using detail::FieldReader;
using detail::json;

namespace {

struct NoiseSource {
    std::mt19937_64 rng;
    std::normal_distribution<double> normal;
};

std::vector<InstanceTick> tick_with(PlatformState& state, double dt, NoiseSource* noise)
{
    if (!(dt > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "tick length must be positive");
    }
    std::vector<InstanceTick> samples;
    samples.reserve(state.instances.size());
    for (const auto& [id, instance] : state.instances) {
        double usage = std::min(instance.demand, instance.cpu_fraction);
        if (noise != nullptr) {
            usage = std::clamp(usage * (1.0 + noise->normal(noise->rng)), 0.0, instance.cpu_fraction);
        }
        auto& history = state.usage[id];
        history.push_back(UsageSample{state.clock, usage});
        while (history.size() > usage_history_limit) {
            history.pop_front();
        }
        samples.push_back(InstanceTick{id, instance.pop, usage, instance.cpu_fraction, 0.0});
    }
    state.clock += dt;
    return samples;
}

std::string at_time(double t)
{
    return "t=" + detail::format_number(t) + "s: ";
}

std::size_t tick_count(const Scenario& scenario)
{
    return static_cast<std::size_t>(std::llround(scenario.duration_s / scenario.tick_s));
}

}  // namespace

std::vector<InstanceTick> tick(PlatformState& state, double dt)
{
    return tick_with(state, dt, nullptr);
}

std::string_view to_string(EventKind kind) noexcept
{
    switch (kind) {
    case EventKind::accepted: return "accepted";
    case EventKind::rejected: return "rejected";
    case EventKind::released: return "released";
    case EventKind::release_skipped: return "release_skipped";
    }
    return "unknown";
}

void validate_scenario(const Scenario& scenario)
{
    if (!(scenario.tick_s > 0.0)) {
        throw Error(ErrorCode::scenario_error, scenario.name + ": tick_s must be positive");
    }
    if (!(scenario.duration_s >= 0.0)) {
        throw Error(ErrorCode::scenario_error, scenario.name + ": duration_s must be non-negative");
    }
    if (!(scenario.e_cpu > 0.0 && scenario.e_cpu <= 1.0)) {
        throw Error(ErrorCode::scenario_error, scenario.name + ": e_cpu must be in (0,1]");
    }
    std::set<std::string> labels;
    double previous = 0.0;
    for (const auto& action : scenario.actions) {
        if (action.t < previous || action.t < 0.0) {
            throw Error(ErrorCode::scenario_error, at_time(action.t) + "actions are not time-ordered");
        }
        previous = action.t;
        if (const auto* allocate_op = std::get_if<AllocateAction>(&action.op)) {
            if (!allocate_op->label.empty()) {
                labels.insert(allocate_op->label);
            }
        } else {
            const auto& release_op = std::get<ReleaseAction>(action.op);
            if (release_op.selector == ReleaseAction::Selector::label && !labels.contains(release_op.label)) {
                throw Error(ErrorCode::scenario_error,
                            at_time(action.t) + "release of unknown instance label '" + release_op.label + "'");
            }
        }
    }
    if (scenario.duration_s < previous) {
        throw Error(ErrorCode::scenario_error, scenario.name + ": duration_s is shorter than the last action");
    }
}

Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir)
{
    const json root = detail::parse_json(text, "scenario");
    FieldReader reader(root, "",
                       {"format_version", "name", "topology", "model", "e_cpu", "duration_s", "tick_s", "noise",
                        "actions"});
    const int version = reader.required<int>("format_version");
    if (version != scenario_format_version) {
        detail::field_error("format_version", "unsupported version " + std::to_string(version));
    }

    Scenario scenario;
    scenario.name = reader.optional<std::string>("name", "scenario");
    if (!reader.has("topology")) {
        detail::field_error("topology", "missing required field");
    }
    const json& topology = reader.at("topology");
    if (topology.is_string()) {
        scenario.topology = load_topology(base_dir / topology.get<std::string>());
    } else {
        scenario.topology = parse_topology(topology.dump());
    }
    if (reader.has("model")) {
        scenario.model = detail::read_model_ref(reader.at("model"), "model");
    }
    scenario.e_cpu = reader.optional<double>("e_cpu", scenario.e_cpu);
    scenario.duration_s = reader.required<double>("duration_s");
    scenario.tick_s = reader.optional<double>("tick_s", scenario.tick_s);
    if (reader.has("noise")) {
        FieldReader noise(reader.at("noise"), "noise", {"sigma", "seed"});
        scenario.noise = NoiseConfig{noise.required<double>("sigma"), noise.optional<std::uint64_t>("seed", 0)};
    }

    if (reader.has("actions")) {
        const json& actions = reader.at("actions");
        if (!actions.is_array()) {
            detail::field_error("actions", "expected an array");
        }
        for (std::size_t i = 0; i < actions.size(); ++i) {
            const auto path = detail::index_path("actions", i);
            FieldReader item(actions[i], path, {"t", "allocate", "release"});
            ScenarioAction action;
            action.t = item.required<double>("t");
            if (item.has("allocate") == item.has("release")) {
                detail::field_error(path, "exactly one of allocate or release is required");
            }
            if (item.has("allocate")) {
                FieldReader op(item.at("allocate"), item.path("allocate"),
                               {"pop", "cpu_cu", "memory_mb", "storage_gb", "demand", "image", "label"});
                AllocateAction allocate_op;
                allocate_op.pop = op.required<std::string>("pop");
                allocate_op.request.cpu_cu = op.required<std::int64_t>("cpu_cu");
                allocate_op.request.memory_mb = op.optional<std::int64_t>("memory_mb", 0);
                allocate_op.request.storage_gb = op.optional<std::int64_t>("storage_gb", 0);
                allocate_op.demand = op.optional<double>("demand", 1.0);
                allocate_op.image = op.optional<std::string>("image", "");
                allocate_op.label = op.optional<std::string>("label", "");
                action.op = std::move(allocate_op);
            } else {
                FieldReader op(item.at("release"), item.path("release"), {"select", "pop", "label"});
                ReleaseAction release_op;
                if (op.has("label")) {
                    release_op.selector = ReleaseAction::Selector::label;
                    release_op.label = op.required<std::string>("label");
                } else {
                    const auto select = op.optional<std::string>("select", "oldest");
                    if (select == "oldest") {
                        release_op.selector = ReleaseAction::Selector::oldest;
                    } else if (select == "newest") {
                        release_op.selector = ReleaseAction::Selector::newest;
                    } else {
                        detail::field_error(op.path("select"), "expected oldest or newest");
                    }
                }
                release_op.pop = op.optional<std::string>("pop", "");
                action.op = std::move(release_op);
            }
            scenario.actions.push_back(std::move(action));
        }
    }
    validate_scenario(scenario);
    return scenario;
}

Scenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot open scenario file " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_scenario(text.str(), path.parent_path());
}

UsageSeries run_scenario(const Scenario& scenario)
{
    validate_scenario(scenario);

    TopologyDoc doc = scenario.topology;
    if (scenario.model) {
        for (auto& pop : doc.pops) {
            pop.model = *scenario.model;
        }
    }
    auto topology = std::make_shared<const Topology>(build(doc));
    PlatformState state = new_platform(topology, scenario.e_cpu);

    std::optional<NoiseSource> noise;
    if (scenario.noise && scenario.noise->sigma > 0.0) {
        noise.emplace(NoiseSource{std::mt19937_64(scenario.noise->seed),
                                  std::normal_distribution<double>(0.0, scenario.noise->sigma)});
    }

    UsageSeries series;
    series.scenario = scenario.name;
    std::map<std::string, std::string> labels;

    auto apply = [&](const ScenarioAction& action) {
        if (const auto* op = std::get_if<AllocateAction>(&action.op)) {
            if (!state.ledgers.contains(op->pop)) {
                throw Error(ErrorCode::scenario_error, at_time(action.t) + "unknown PoP '" + op->pop + "'");
            }
            Allocation allocation;
            try {
                allocation = allocate(state, op->pop, op->request, op->image, op->demand);
            } catch (const Error& e) {
                throw Error(ErrorCode::scenario_error, at_time(action.t) + e.what());
            }
            ScenarioEvent event{action.t, EventKind::accepted, op->pop, "", op->label, std::nullopt};
            if (allocation.outcome.accepted) {
                event.instance_id = allocation.instance->id;
                if (!op->label.empty()) {
                    labels[op->label] = event.instance_id;
                }
            } else {
                event.kind = EventKind::rejected;
                event.reason = allocation.outcome.reason;
                labels.erase(op->label);
            }
            series.events.push_back(std::move(event));
            return;
        }

        const auto& op = std::get<ReleaseAction>(action.op);
        if (!op.pop.empty() && !state.ledgers.contains(op.pop)) {
            throw Error(ErrorCode::scenario_error, at_time(action.t) + "unknown PoP '" + op.pop + "'");
        }
        std::string target;
        if (op.selector == ReleaseAction::Selector::label) {
            if (auto it = labels.find(op.label); it != labels.end()) {
                target = it->second;
                labels.erase(it);
            }
        } else {
            std::vector<std::string> candidates;
            for (const auto& [id, instance] : state.instances) {
                if (op.pop.empty() || instance.pop == op.pop) {
                    candidates.push_back(id);
                }
            }
            if (!candidates.empty()) {
                target = op.selector == ReleaseAction::Selector::oldest ? candidates.front() : candidates.back();
            }
        }
        if (target.empty()) {
            series.events.push_back(ScenarioEvent{action.t, EventKind::release_skipped, op.pop, "", op.label, std::nullopt});
            return;
        }
        const std::string pop = state.instance(target).pop;
        release(state, target);
        std::erase_if(labels, [&](const auto& entry) { return entry.second == target; });
        series.events.push_back(ScenarioEvent{action.t, EventKind::released, pop, target, op.label, std::nullopt});
    };

    const auto& pops = topology->pops();
    auto next_action = scenario.actions.begin();
    const std::size_t ticks = tick_count(scenario);
    series.ticks.reserve(ticks);
    for (std::size_t k = 0; k < ticks; ++k) {
        const double t = static_cast<double>(k) * scenario.tick_s;
        state.clock = t;
        while (next_action != scenario.actions.end() && next_action->t <= t) {
            apply(*next_action++);
        }

        std::map<std::string, double> expected;
        for (const auto& pop : pops) {
            expected.merge(recompute_pop_limits(state, pop.name));
        }

        TickRecord record;
        record.t = t;
        record.instances = tick_with(state, scenario.tick_s, noise ? &*noise : nullptr);
        for (const auto& pop : pops) {
            PopTick aggregate{pop.name, 0.0, 0.0, 0.0};
            for (auto& sample : record.instances) {
                if (sample.pop != pop.name) {
                    continue;
                }
                sample.expected = std::min(state.instance(sample.id).demand, expected.at(sample.id));
                aggregate.usage += sample.usage;
                aggregate.limit += sample.limit;
                aggregate.expected += sample.expected;
            }
            record.pops.push_back(std::move(aggregate));
        }
        series.ticks.push_back(std::move(record));
    }
    return series;
}

std::size_t export_series(const UsageSeries& series, std::ostream& out)
{
    using detail::format_number;
    out << "t,instance_id,pop,usage,limit,expected\n";
    std::size_t rows = 0;
    for (const auto& record : series.ticks) {
        const auto t = format_number(record.t);
        for (const auto& sample : record.instances) {
            out << t << ',' << sample.id << ',' << sample.pop << ',' << format_number(sample.usage) << ','
                << format_number(sample.limit) << ',' << format_number(sample.expected) << '\n';
            ++rows;
        }
        for (const auto& aggregate : record.pops) {
            out << t << ',' << pop_aggregate_id << ',' << aggregate.pop << ',' << format_number(aggregate.usage) << ','
                << format_number(aggregate.limit) << ',' << format_number(aggregate.expected) << '\n';
            ++rows;
        }
    }
    out.flush();
    if (!out) {
        throw Error(ErrorCode::io_error, "failed to write series");
    }
    return rows;
}

namespace {

TopologyDoc single_pop_topology()
{
    TopologyDoc doc;
    PoPDecl pop;
    pop.name = "pop1";
    pop.mc_cpu = 4;
    pop.model = ResourceModelRef{std::string(model_kind::fixed_limit_a), {}};
    pop.endpoint.port = 8081;
    doc.pops.push_back(pop);
    return doc;
}

TopologyDoc two_pop_topology()
{
    TopologyDoc doc;
    for (int i = 1; i <= 2; ++i) {
        PoPDecl pop;
        pop.name = "pop" + std::to_string(i);
        pop.mc_cpu = 2;
        pop.model = ResourceModelRef{std::string(model_kind::over_provisioning_b), {}};
        pop.endpoint.port = 8080 + i;
        doc.pops.push_back(pop);
        doc.links.push_back(LinkDecl{pop.name, "s1", 10.0, 1000.0, 0.0});
    }
    doc.switches.push_back("s1");
    return doc;
}

AllocateAction stress(const std::string& pop)
{
    AllocateAction op;
    op.pop = pop;
    op.request.cpu_cu = 1;
    op.image = "stress";
    return op;
}

Scenario experiment1(std::string_view model_kind_name, std::string name)
{
    Scenario scenario;
    scenario.name = std::move(name);
    scenario.topology = single_pop_topology();
    scenario.model = ResourceModelRef{std::string(model_kind_name), {}};
    scenario.e_cpu = 0.5;
    scenario.tick_s = 1.0;
    for (int i = 1; i <= 8; ++i) {
        scenario.actions.push_back(ScenarioAction{20.0 * i, stress("pop1")});
    }
    for (int i = 1; i <= 8; ++i) {
        ReleaseAction op;
        op.pop = "pop1";
        scenario.actions.push_back(ScenarioAction{160.0 + 20.0 * i, op});
    }
    scenario.duration_s = 340.0;
    return scenario;
}

std::optional<std::string_view> experiment2_kind(std::string_view model)
{
    if (model == "none") {
        return model_kind::none;
    }
    if (model == "shared") {
        return model_kind::shared_pool;
    }
    if (model == "modelA") {
        return model_kind::fixed_limit_a;
    }
    if (model == "modelB") {
        return model_kind::over_provisioning_b;
    }
    return std::nullopt;
}

Scenario experiment2(std::string_view model, int pop1_count)
{
    Scenario scenario;
    scenario.name = "experiment2_" + std::string(model) + "_k" + std::to_string(pop1_count);
    scenario.topology = two_pop_topology();
    scenario.model = ResourceModelRef{std::string(*experiment2_kind(model)), {}};
    scenario.e_cpu = 0.5;
    scenario.tick_s = 1.0;
    scenario.duration_s = 10.0;
    for (int i = 0; i < 2; ++i) {
        scenario.actions.push_back(ScenarioAction{0.0, stress("pop2")});
    }
    for (int i = 0; i < pop1_count; ++i) {
        scenario.actions.push_back(ScenarioAction{0.0, stress("pop1")});
    }
    return scenario;
}

constexpr std::string_view experiment2_models[] = {"none", "shared", "modelA", "modelB"};

}  // namespace

std::optional<Scenario> builtin_scenario(std::string_view name)
{
    if (name == "experiment1_modelA") {
        return experiment1(model_kind::fixed_limit_a, std::string(name));
    }
    if (name == "experiment1_modelB") {
        return experiment1(model_kind::over_provisioning_b, std::string(name));
    }
    constexpr std::string_view prefix = "experiment2_";
    if (name.starts_with(prefix)) {
        const auto rest = name.substr(prefix.size());
        const auto split = rest.rfind("_k");
        if (split == std::string_view::npos || !experiment2_kind(rest.substr(0, split))) {
            return std::nullopt;
        }
        const auto digits = rest.substr(split + 2);
        if (digits.empty() || digits.size() > 4 ||
            !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            return std::nullopt;
        }
        return experiment2(rest.substr(0, split), std::stoi(std::string(digits)));
    }
    return std::nullopt;
}

std::vector<std::string> builtin_scenario_names()
{
    std::vector<std::string> names{"experiment1_modelA", "experiment1_modelB"};
    for (auto model : experiment2_models) {
        for (int k : isolation_sweep_counts) {
            names.push_back("experiment2_" + std::string(model) + "_k" + std::to_string(k));
        }
    }
    return names;
}

std::vector<SweepPoint> run_isolation_sweep(std::string_view model, std::span<const int> counts)
{
    if (!experiment2_kind(model)) {
        throw Error(ErrorCode::invalid_argument, "unknown sweep model '" + std::string(model) + "'");
    }
    std::vector<SweepPoint> points;
    for (int k : counts) {
        if (k < 0) {
            throw Error(ErrorCode::invalid_argument, "sweep counts must be non-negative");
        }
        const auto series = run_scenario(experiment2(model, k));
        SweepPoint point;
        point.pop1_requested = k;
        for (const auto& event : series.events) {
            if (event.kind == EventKind::accepted && event.pop == "pop1") {
                ++point.pop1_accepted;
            }
        }
        const auto& last = series.ticks.back();
        std::map<std::string, std::pair<double, int>> per_pop;
        for (const auto& sample : last.instances) {
            auto& [sum, count] = per_pop[sample.pop];
            sum += sample.usage;
            ++count;
        }
        auto mean = [&](const std::string& pop) {
            auto it = per_pop.find(pop);
            return it == per_pop.end() ? 0.0 : it->second.first / it->second.second;
        };
        point.pop1_usage_per_instance = mean("pop1");
        point.pop2_usage_per_instance = mean("pop2");
        points.push_back(point);
    }
    return points;
}

std::size_t export_sweep(std::span<const SweepPoint> points, std::ostream& out)
{
    using detail::format_number;
    out << "pop1_instances,pop1_accepted,pop1_usage_per_instance,pop2_usage_per_instance\n";
    for (const auto& point : points) {
        out << point.pop1_requested << ',' << point.pop1_accepted << ',' << format_number(point.pop1_usage_per_instance)
            << ',' << format_number(point.pop2_usage_per_instance) << '\n';
    }
    out.flush();
    if (!out) {
        throw Error(ErrorCode::io_error, "failed to write sweep");
    }
    return points.size();
}

}  // namespace popnet
