#include <popnet/chaining.hpp>
#include <popnet/platform.hpp>
#include <popnet/resource_models.hpp>
#include <popnet/topology.hpp>
#include <popnet/workload.hpp>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <memory>
#include <sstream>

namespace py = pybind11;
using namespace popnet;

namespace {

py::object reason_or_none(const std::optional<RejectReason>& reason)
{
    if (!reason) {
        return py::none();
    }
    return py::str(std::string(to_string(*reason)));
}

py::dict instance_dict(const ComputeInstance& instance)
{
    py::dict d;
    d["id"] = instance.id;
    d["pop"] = instance.pop;
    d["image"] = instance.image;
    d["cpu_cu"] = instance.request.cpu_cu;
    d["memory_mb"] = instance.request.memory_mb;
    d["storage_gb"] = instance.request.storage_gb;
    d["cpu_fraction"] = instance.cpu_fraction;
    d["demand"] = instance.demand;
    d["created_at"] = instance.created_at;
    d["attach_port"] = instance.attach_port;
    return d;
}

py::dict outcome_dict(const AllocationOutcome& outcome)
{
    py::dict d;
    d["accepted"] = outcome.accepted;
    d["cpu_fraction"] = outcome.cpu_fraction;
    d["updated_fractions"] = outcome.updated_fractions;
    d["reason"] = reason_or_none(outcome.reason);
    return d;
}

py::dict chain_dict(const Chain& chain)
{
    py::dict d;
    d["id"] = chain.id;
    d["vlan_tag"] = chain.vlan_tag;
    d["hops"] = chain.hops;
    d["segments"] = chain.segments;
    d["metric"] = std::string(to_string(chain.metric));
    return d;
}

py::dict flow_dict(const FlowEntry& entry)
{
    py::dict d;
    d["switch"] = entry.switch_node;
    d["in_port"] = entry.match.in_port;
    d["vlan_tag"] = entry.match.vlan_tag;
    d["out_port"] = entry.out_port;
    d["vlan_op"] = std::string(to_string(entry.vlan));
    d["chain_id"] = entry.chain_id;
    return d;
}

std::shared_ptr<const Topology> checked_topology(const TopologyDoc& doc)
{
    if (auto violations = validate(doc); !violations.empty()) {
        throw Error(ErrorCode::validation_error, violations.front().field + ": " + violations.front().message);
    }
    return std::make_shared<const Topology>(build(doc));
}

// Python-facing platform. Single-threaded; holds the state by value.
class PyPlatform {
public:
    PyPlatform(const TopologyDoc& doc, double e_cpu) : state_(new_platform(checked_topology(doc), e_cpu)) {}

    py::dict allocate(const std::string& pop, std::int64_t cpu_cu, std::int64_t memory_mb, std::int64_t storage_gb,
                      const std::string& image, double demand)
    {
        auto allocation = popnet::allocate(state_, pop, ResourceRequest{cpu_cu, memory_mb, storage_gb}, image, demand);
        auto d = outcome_dict(allocation.outcome);
        d["id"] = allocation.instance ? py::object(py::str(allocation.instance->id)) : py::object(py::none());
        return d;
    }

    py::dict release(const std::string& id) { return outcome_dict(popnet::release(state_, id)); }

    py::list instances() const
    {
        py::list out;
        for (const auto& [id, instance] : state_.instances) {
            out.append(instance_dict(instance));
        }
        return out;
    }

    py::dict ledgers() const
    {
        py::dict out;
        for (const auto& [name, ledger] : state_.ledgers) {
            py::dict d;
            d["mc_cpu"] = ledger.mc_cpu;
            d["ac_cpu"] = ledger.ac_cpu;
            d["mem_capacity_mb"] = ledger.mem_capacity_mb;
            d["mem_allocated_mb"] = ledger.mem_allocated_mb;
            d["storage_capacity_gb"] = ledger.storage_capacity_gb;
            d["storage_allocated_gb"] = ledger.storage_allocated_gb;
            d["model"] = ledger.model.kind;
            out[py::str(name)] = d;
        }
        return out;
    }

    py::dict set_chain(const std::vector<std::string>& ids, const std::string& metric)
    {
        return chain_dict(popnet::set_chain(state_, ids, parse_metric(metric)));
    }

    py::list remove_chain(const std::string& id)
    {
        py::list out;
        for (const auto& entry : popnet::remove_chain(state_, id)) {
            out.append(flow_dict(entry));
        }
        return out;
    }

    py::list chains() const
    {
        py::list out;
        for (const auto& [id, chain] : state_.chains) {
            out.append(chain_dict(chain));
        }
        return out;
    }

    py::list flows() const
    {
        py::list out;
        for (const auto& [node, table] : state_.flows) {
            for (const auto& [match, entry] : table) {
                out.append(flow_dict(entry));
            }
        }
        return out;
    }

    py::dict traffic(const std::string& chain_id, double mbits) const
    {
        const auto report = simulate_traffic(state_, chain_id, mbits);
        py::dict d;
        d["end_to_end_delay_ms"] = report.end_to_end_delay_ms;
        d["bottleneck_bandwidth_mbps"] = report.bottleneck_bandwidth_mbps;
        d["delivery_probability"] = report.delivery_probability;
        d["hop_count"] = report.hop_count;
        d["transfer_time_ms"] = report.transfer_time_ms;
        return d;
    }

    py::list tick(double dt)
    {
        py::list out;
        for (const auto& sample : popnet::tick(state_, dt)) {
            py::dict d;
            d["id"] = sample.id;
            d["pop"] = sample.pop;
            d["usage"] = sample.usage;
            d["limit"] = sample.limit;
            d["expected"] = sample.expected;
            out.append(d);
        }
        return out;
    }

    std::map<std::string, double> recompute_limits() const { return recompute_all_limits(state_); }
    std::vector<std::string> check_invariants() const { return popnet::check_invariants(state_); }
    double e_cpu() const { return state_.config.e_cpu; }
    std::int64_t total_mc() const { return state_.config.total_mc; }
    double clock() const { return state_.clock; }

private:
    PlatformState state_;
};

Scenario resolve_scenario(const std::optional<std::string>& source, const std::optional<std::string>& text,
                          const std::string& base_dir)
{
    if (text) {
        return parse_scenario(*text, base_dir);
    }
    if (!source) {
        throw Error(ErrorCode::invalid_argument, "either a scenario name, a path or text is required");
    }
    if (auto builtin = builtin_scenario(*source)) {
        return *builtin;
    }
    return load_scenario(*source);
}

std::string series_csv(const UsageSeries& series)
{
    std::ostringstream out;
    export_series(series, out);
    return out.str();
}

}  // namespace

PYBIND11_MODULE(_popnet, m)
{
    m.doc() = "Multi-PoP emulation platform: resource models, chaining and workload simulation.";

    // Kept alive for the interpreter's lifetime; carries the error code as .code.
    static PyObject* error_type = py::exception<Error>(m, "Error", PyExc_RuntimeError).release().ptr();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const Error& e) {
            py::object instance = py::handle(error_type)(e.what());
            instance.attr("code") = std::string(to_string(e.code()));
            PyErr_SetObject(error_type, instance.ptr());
        }
    });

    m.def(
        "validate_topology",
        [](const std::string& text) {
            std::vector<std::pair<std::string, std::string>> out;
            for (const auto& v : validate(parse_topology(text))) {
                out.emplace_back(v.field, v.message);
            }
            return out;
        },
        py::arg("text"), "Parses topology JSON and returns (field, message) violations.");

    m.def(
        "normalize_topology", [](const std::string& text) { return serialize_topology(parse_topology(text)); },
        py::arg("text"), "Parses topology JSON and serializes it back with every default filled in.");

    m.def(
        "topology_graph",
        [](const std::string& text) {
            const auto topology = checked_topology(parse_topology(text));
            py::dict nodes;
            for (std::size_t i = 0; i < topology->node_count(); ++i) {
                py::list edges;
                for (const auto& edge : topology->edges(i)) {
                    edges.append(py::make_tuple(edge.port, topology->name(edge.to), edge.peer_port));
                }
                nodes[py::str(topology->name(i))] = edges;
            }
            return nodes;
        },
        py::arg("text"), "Node name to a list of (port, peer, peer_port) links.");

    m.def(
        "compute_path",
        [](const std::string& text, const std::string& src, const std::string& dst, const std::string& metric) {
            const auto topology = checked_topology(parse_topology(text));
            const auto m = parse_metric(metric);
            const auto path = popnet::compute_path(*topology, src, dst, m);
            return py::make_tuple(path, path_cost(*topology, path, m));
        },
        py::arg("topology"), py::arg("src"), py::arg("dst"), py::arg("metric") = "fewest_hops",
        "Returns (node path, cost) between two nodes.");

    m.def(
        "cpu_limit_model_a",
        [](std::int64_t nc, std::int64_t mc, std::int64_t ac, double e_cpu, std::int64_t total_mc) {
            PoPLedger ledger;
            ledger.mc_cpu = mc;
            ledger.ac_cpu = ac;
            return popnet::cpu_limit_model_a(nc, ledger, GlobalConfig{e_cpu, 0, total_mc});
        },
        py::arg("nc"), py::arg("mc"), py::arg("ac"), py::arg("e_cpu"), py::arg("total_mc"),
        "Fixed-limit CPU fraction for a new instance, or None when it does not fit.");

    m.def(
        "cpu_limit_model_b",
        [](std::int64_t nc, std::int64_t mc, std::int64_t ac, double e_cpu, std::int64_t total_mc) {
            PoPLedger ledger;
            ledger.mc_cpu = mc;
            ledger.ac_cpu = ac;
            return popnet::cpu_limit_model_b(nc, ledger, GlobalConfig{e_cpu, 0, total_mc});
        },
        py::arg("nc"), py::arg("mc"), py::arg("ac"), py::arg("e_cpu"), py::arg("total_mc"),
        "Over-provisioning CPU fraction given the allocated units including the instance.");

    py::class_<PyPlatform>(m, "Platform")
        .def(py::init([](const std::string& topology, double e_cpu) {
                 return PyPlatform(parse_topology(topology), e_cpu);
             }),
             py::arg("topology"), py::arg("e_cpu") = 0.5)
        .def_static(
            "load", [](const std::string& path, double e_cpu) { return PyPlatform(load_topology(path), e_cpu); },
            py::arg("path"), py::arg("e_cpu") = 0.5)
        .def("allocate", &PyPlatform::allocate, py::arg("pop"), py::arg("cpu_cu") = 1, py::arg("memory_mb") = 0,
             py::arg("storage_gb") = 0, py::arg("image") = "", py::arg("demand") = 1.0)
        .def("release", &PyPlatform::release, py::arg("instance_id"))
        .def("instances", &PyPlatform::instances)
        .def("ledgers", &PyPlatform::ledgers)
        .def("set_chain", &PyPlatform::set_chain, py::arg("instance_ids"), py::arg("metric") = "fewest_hops")
        .def("remove_chain", &PyPlatform::remove_chain, py::arg("chain_id"))
        .def("chains", &PyPlatform::chains)
        .def("flows", &PyPlatform::flows)
        .def("traffic", &PyPlatform::traffic, py::arg("chain_id"), py::arg("mbits") = 1.0)
        .def("tick", &PyPlatform::tick, py::arg("dt") = 1.0)
        .def("recompute_limits", &PyPlatform::recompute_limits)
        .def("check_invariants", &PyPlatform::check_invariants)
        .def_property_readonly("e_cpu", &PyPlatform::e_cpu)
        .def_property_readonly("total_mc", &PyPlatform::total_mc)
        .def_property_readonly("clock", &PyPlatform::clock);

    m.def("builtin_scenarios", &builtin_scenario_names);

    m.def(
        "run_scenario",
        [](std::optional<std::string> source, std::optional<std::string> text, const std::string& base_dir) {
            return series_csv(run_scenario(resolve_scenario(source, text, base_dir)));
        },
        py::arg("source") = py::none(), py::kw_only(), py::arg("text") = py::none(), py::arg("base_dir") = "",
        "Runs a built-in scenario, a scenario file or inline scenario JSON and returns the CSV export.");

    m.def(
        "isolation_sweep",
        [](const std::string& model) {
            py::list out;
            for (const auto& point : run_isolation_sweep(model)) {
                py::dict d;
                d["pop1_requested"] = point.pop1_requested;
                d["pop1_accepted"] = point.pop1_accepted;
                d["pop1_usage_per_instance"] = point.pop1_usage_per_instance;
                d["pop2_usage_per_instance"] = point.pop2_usage_per_instance;
                out.append(d);
            }
            return out;
        },
        py::arg("model"));

    m.def(
        "export_sweep",
        [](const std::string& model) {
            std::ostringstream out;
            popnet::export_sweep(run_isolation_sweep(model), out);
            return out.str();
        },
        py::arg("model"), "CSV export of the cross-PoP isolation sweep.");
}
