#include "bdverify/cli.hpp"

#include "bdverify/abstract_domain.hpp"
#include "bdverify/error.hpp"
#include "bdverify/io.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

namespace bdverify {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json diagnostics_to_json(const PositionDiagnostics& d)
{
    return {{"positions_total", d.positions_total},
            {"positions_explored", d.positions_explored},
            {"quick_unsat", d.quick_unsat},
            {"image_unsat", d.image_unsat},
            {"conjunction_unsat", d.conjunction_unsat},
            {"solver_sat", d.solver_sat},
            {"solver_unknown", d.solver_unknown},
            {"spurious", d.spurious}};
}

PositionDiagnostics diagnostics_from_json(const json& j)
{
    PositionDiagnostics d;
    d.positions_total = j.at("positions_total").get<std::size_t>();
    d.positions_explored = j.at("positions_explored").get<std::size_t>();
    d.quick_unsat = j.at("quick_unsat").get<std::size_t>();
    d.image_unsat = j.at("image_unsat").get<std::size_t>();
    d.conjunction_unsat = j.at("conjunction_unsat").get<std::size_t>();
    d.solver_sat = j.at("solver_sat").get<std::size_t>();
    d.solver_unknown = j.at("solver_unknown").get<std::size_t>();
    d.spurious = j.at("spurious").get<std::size_t>();
    return d;
}

template <class T>
json optional_json(const std::optional<T>& v)
{
    return v ? json(*v) : json(nullptr);
}

bool is_csv(const std::string& path)
{
    return fs::path(path).extension() == ".csv";
}

std::vector<Image> load_dataset(const std::string& images, const std::string& labels)
{
    if (is_csv(images))
        return load_dataset_csv(images);
    if (labels.empty())
        throw FormatError("IDX dataset " + images + " needs a labels file");
    return load_mnist_idx(images, labels);
}

void require_file(const std::string& path, const char* what)
{
    if (path.empty())
        throw PreconditionError(std::string("missing ") + what + " path");
    if (!fs::is_regular_file(path))
        throw FormatError(std::string(what) + " not found: " + path);
}

// Serializes debug dump writes; file names carry a sequence number so that
// repeated rounds do not overwrite each other.
class DumpSink {
public:
    DumpSink(std::string bounds_dir, std::string lp_dir, int target)
        : bounds_dir_(std::move(bounds_dir)), lp_dir_(std::move(lp_dir)), target_(target)
    {
    }

    void install(VerifyXOptions& options)
    {
        if (!bounds_dir_.empty()) {
            fs::create_directories(bounds_dir_);
            options.on_state = [this](const TriggerSpec& spec, int image, const AbstractState& state) {
                write(bounds_dir_, spec, image, ".json", dump_bounds(state));
            };
        }
        if (!lp_dir_.empty()) {
            fs::create_directories(lp_dir_);
            options.on_system = [this](const TriggerSpec& spec, int image, const ConstraintSystem& system) {
                write(lp_dir_, spec, image, ".lp", system.to_lp());
            };
        }
    }

private:
    void write(const std::string& dir, const TriggerSpec& spec, int image, const char* ext,
               const std::string& text)
    {
        const std::size_t seq = sequence_.fetch_add(1);
        std::ostringstream name;
        name << 't' << target_ << '_' << std::setw(7) << std::setfill('0') << seq << "_r" << spec.row
             << "_c" << spec.col << '_' << (image < 0 ? std::string("all") : "x" + std::to_string(image))
             << ext;
        std::lock_guard lock(mutex_);
        std::ofstream(fs::path(dir) / name.str()) << text;
    }

    std::string bounds_dir_;
    std::string lp_dir_;
    int target_;
    std::atomic<std::size_t> sequence_{0};
    std::mutex mutex_;
};

struct Inputs {
    Network net;
    std::vector<Image> dataset;
    std::vector<Image> validation;
};

Inputs load_inputs(const RunConfig& config)
{
    require_file(config.network, "network");
    require_file(config.dataset_images, "dataset images");
    if (!config.dataset_labels.empty())
        require_file(config.dataset_labels, "dataset labels");
    Network net = load_network(config.network);
    auto dataset = load_dataset(config.dataset_images, config.dataset_labels);
    std::vector<Image> validation;
    if (config.validation_images.empty()) {
        validation = dataset;
    } else {
        require_file(config.validation_images, "validation images");
        validation = load_dataset(config.validation_images, config.validation_labels);
    }
    for (const auto* set : {&dataset, &validation})
        for (const auto& image : *set)
            if (!(image.shape == net.input_shape()))
                throw FormatError("dataset image shape does not match the network input");
    return {std::move(net), std::move(dataset), std::move(validation)};
}

std::vector<Image> select_images(const RunConfig& config, const Inputs& in, int target)
{
    if (!config.indices.empty()) {
        std::vector<Image> out;
        for (std::size_t i : config.indices) {
            if (i >= in.dataset.size())
                throw PreconditionError("image index " + std::to_string(i) + " out of range");
            out.push_back(in.dataset[i]);
        }
        return out;
    }
    auto filtered = filter_population(in.net, in.dataset, target);
    const auto k = static_cast<std::size_t>(config.sprt.k);
    if (filtered.size() < k)
        throw PreconditionError("fewer than K images survive filtering for target " +
                                std::to_string(target));
    filtered.resize(k);
    return filtered;
}

VerifyXOptions verify_x_options(const RunConfig& config, int workers, std::uint64_t seed)
{
    VerifyXOptions o;
    o.budget = std::chrono::duration<double>(config.verifyx_budget_secs);
    o.solver.time_budget = std::chrono::duration<double>(config.solver_budget_secs);
    o.optimizer.budget = std::chrono::duration<double>(config.opt_budget_secs);
    o.optimizer.seed = seed;
    o.workers = workers;
    return o;
}

std::optional<double> rate_if_trigger(const Inputs& in, const std::optional<Trigger>& trigger,
                                      int target)
{
    if (!trigger)
        return std::nullopt;
    const auto validation = filter_population(in.net, in.validation, target);
    if (validation.empty())
        return std::nullopt;
    return validate_success_rate(in.net, *trigger, validation, target);
}

TargetReport attack_target(const RunConfig& config, const Inputs& in, int target, std::uint64_t seed)
{
    TargetReport r;
    r.target = target;
    const auto images = select_images(config, in, target);
    const auto positions = all_positions(in.net.input_shape(), config.trigger);
    r.diagnostics.positions_total = positions.size();
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                              std::chrono::duration<double>(config.verifyx_budget_secs));
    OptimizerOptions opt;
    opt.budget = std::chrono::duration<double>(config.opt_budget_secs);
    for (const auto& spec : positions) {
        if (std::chrono::steady_clock::now() > deadline) {
            r.budget_exhausted = true;
            break;
        }
        ++r.diagnostics.positions_explored;
        opt.seed = seed ^ ((static_cast<std::uint64_t>(spec.row) << 32) | static_cast<std::uint64_t>(spec.col));
        if (auto t = op_trigger(in.net, images, std::nullopt, spec, target, opt)) {
            r.verdict = Verdict::Unsafe;
            r.trigger = std::move(t);
            break;
        }
    }
    r.success_rate = rate_if_trigger(in, r.trigger, target);
    return r;
}

TargetReport run_target(const RunConfig& config, const Inputs& in, int target, int workers)
{
    const std::uint64_t seed = config.seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(target);
    DumpSink sink(config.dump_bounds_dir, config.dump_lp_dir, target);
    const auto start = std::chrono::steady_clock::now();
    TargetReport r;
    switch (config.command) {
    case Command::Verify: {
        VerifyPrOptions o;
        o.verify_x = verify_x_options(config, workers, seed);
        sink.install(o.verify_x);
        o.global_budget = std::chrono::duration<double>(config.global_budget_secs);
        o.seed = seed;
        o.assume_filtered = true;
        const auto population = filter_population(in.net, in.dataset, target);
        const auto validation = filter_population(in.net, in.validation, target);
        const auto v =
            verify_pr(in.net, population, config.sprt, config.trigger, target, validation, o);
        r.verdict = v.verdict;
        r.rounds = v.sprt.n;
        r.safe_rounds = v.sprt.z;
        r.success_rate = v.success_rate;
        r.trigger = v.trigger;
        r.diagnostics = v.diagnostics;
        r.budget_exhausted = v.budget_exhausted;
        break;
    }
    case Command::VerifySet: {
        auto o = verify_x_options(config, workers, seed);
        sink.install(o);
        const auto images = select_images(config, in, target);
        const auto v = verify_x(in.net, images, config.trigger, target, o);
        r.verdict = v.verdict;
        r.trigger = v.trigger;
        r.diagnostics = v.diagnostics;
        r.budget_exhausted = v.budget_exhausted;
        r.success_rate = rate_if_trigger(in, r.trigger, target);
        break;
    }
    case Command::Attack:
        r = attack_target(config, in, target, seed);
        break;
    case Command::Eval:
        break;
    }
    r.target = target;
    if (config.include_timing)
        r.wall_time_secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

int verdict_rank(Verdict v)
{
    switch (v) {
    case Verdict::Safe: return 0;
    case Verdict::Unknown: return 2;
    case Verdict::Unsafe: return 3;
    }
    return 1;
}

}  // namespace

std::string to_string(Command command)
{
    switch (command) {
    case Command::Verify: return "verify";
    case Command::VerifySet: return "verify-set";
    case Command::Attack: return "attack";
    case Command::Eval: return "eval";
    }
    return "?";
}

Command command_from_string(const std::string& text)
{
    for (auto c : {Command::Verify, Command::VerifySet, Command::Attack, Command::Eval})
        if (to_string(c) == text)
            return c;
    throw FormatError("unknown command '" + text + "'");
}

void RunConfig::validate() const
{
    sprt.validate();
    BDV_REQUIRE(workers >= 1, "workers must be at least 1");
    BDV_REQUIRE(trigger.channels >= 0 && trigger.height >= 0 && trigger.width >= 0,
                "trigger shape must be non-negative");
    BDV_REQUIRE(verifyx_budget_secs > 0 && global_budget_secs > 0 && solver_budget_secs > 0 &&
                    opt_budget_secs > 0,
                "budgets must be positive");
}

json config_to_json(const RunConfig& c)
{
    return {{"command", to_string(c.command)},
            {"network", c.network},
            {"dataset_images", c.dataset_images},
            {"dataset_labels", c.dataset_labels},
            {"validation_images", c.validation_images},
            {"validation_labels", c.validation_labels},
            {"trigger_shape", {c.trigger.channels, c.trigger.height, c.trigger.width}},
            {"target", c.target ? json(*c.target) : json("all")},
            {"theta", c.sprt.theta},
            {"k", c.sprt.k},
            {"alpha", c.sprt.alpha},
            {"beta", c.sprt.beta},
            {"delta", c.sprt.delta},
            {"p0", c.sprt.p0()},
            {"p1", c.sprt.p1()},
            {"workers", c.workers},
            {"seed", c.seed},
            {"verifyx_budget_secs", c.verifyx_budget_secs},
            {"global_budget_secs", c.global_budget_secs},
            {"solver_budget_secs", c.solver_budget_secs},
            {"opt_budget_secs", c.opt_budget_secs},
            {"indices", c.indices}};
}

RunConfig config_from_json(const json& j)
{
    RunConfig c;
    c.command = command_from_string(j.at("command").get<std::string>());
    c.network = j.at("network").get<std::string>();
    c.dataset_images = j.at("dataset_images").get<std::string>();
    c.dataset_labels = j.at("dataset_labels").get<std::string>();
    c.validation_images = j.at("validation_images").get<std::string>();
    c.validation_labels = j.at("validation_labels").get<std::string>();
    const auto& s = j.at("trigger_shape");
    c.trigger = {s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>()};
    if (j.at("target").is_number_integer())
        c.target = j.at("target").get<int>();
    c.sprt.theta = j.at("theta").get<double>();
    c.sprt.k = j.at("k").get<int>();
    c.sprt.alpha = j.at("alpha").get<double>();
    c.sprt.beta = j.at("beta").get<double>();
    c.sprt.delta = j.at("delta").get<double>();
    c.workers = j.at("workers").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.verifyx_budget_secs = j.at("verifyx_budget_secs").get<double>();
    c.global_budget_secs = j.at("global_budget_secs").get<double>();
    c.solver_budget_secs = j.at("solver_budget_secs").get<double>();
    c.opt_budget_secs = j.at("opt_budget_secs").get<double>();
    c.indices = j.at("indices").get<std::vector<std::size_t>>();
    return c;
}

bool TargetReport::operator==(const TargetReport& o) const
{
    auto same_trigger = [](const std::optional<Trigger>& a, const std::optional<Trigger>& b) {
        if (a.has_value() != b.has_value())
            return false;
        return !a || (a->spec == b->spec && a->values == b->values);
    };
    return target == o.target && verdict == o.verdict && rounds == o.rounds &&
           safe_rounds == o.safe_rounds && success_rate == o.success_rate &&
           same_trigger(trigger, o.trigger) && diagnostics == o.diagnostics &&
           budget_exhausted == o.budget_exhausted && wall_time_secs == o.wall_time_secs;
}

json Report::to_json() const
{
    json targets_json = json::array();
    for (const auto& t : targets) {
        json entry = {{"target", t.target},
                      {"verdict", to_string(t.verdict)},
                      {"rounds", t.rounds},
                      {"safe_rounds", t.safe_rounds},
                      {"success_rate", optional_json(t.success_rate)},
                      {"trigger", t.trigger ? trigger_to_json(*t.trigger) : json(nullptr)},
                      {"diagnostics", diagnostics_to_json(t.diagnostics)},
                      {"budget_exhausted", t.budget_exhausted}};
        if (t.wall_time_secs)
            entry["wall_time_secs"] = *t.wall_time_secs;
        targets_json.push_back(std::move(entry));
    }
    json doc = {{"command", to_string(config.command)},
                {"config", config_to_json(config)},
                {"seed", config.seed},
                {"nondeterministic", nondeterministic},
                {"targets", targets_json}};
    if (eval)
        doc["eval"] = {{"images", eval->images},
                       {"correct", eval->correct},
                       {"accuracy", eval->images ? static_cast<double>(eval->correct) /
                                                       static_cast<double>(eval->images)
                                                 : 0.0},
                       {"predictions", eval->predictions}};
    return doc;
}

Report Report::from_json(const json& doc)
{
    try {
        Report r;
        r.config = config_from_json(doc.at("config"));
        r.nondeterministic = doc.at("nondeterministic").get<bool>();
        for (const auto& e : doc.at("targets")) {
            TargetReport t;
            t.target = e.at("target").get<int>();
            t.verdict = verdict_from_string(e.at("verdict").get<std::string>());
            t.rounds = e.at("rounds").get<std::size_t>();
            t.safe_rounds = e.at("safe_rounds").get<std::size_t>();
            if (!e.at("success_rate").is_null())
                t.success_rate = e.at("success_rate").get<double>();
            if (!e.at("trigger").is_null())
                t.trigger = trigger_from_json(e.at("trigger"));
            t.diagnostics = diagnostics_from_json(e.at("diagnostics"));
            t.budget_exhausted = e.at("budget_exhausted").get<bool>();
            if (e.contains("wall_time_secs"))
                t.wall_time_secs = e.at("wall_time_secs").get<double>();
            r.targets.push_back(std::move(t));
        }
        if (doc.contains("eval")) {
            EvalSummary s;
            s.images = doc.at("eval").at("images").get<std::size_t>();
            s.correct = doc.at("eval").at("correct").get<std::size_t>();
            s.predictions = doc.at("eval").at("predictions").get<std::vector<int>>();
            r.eval = std::move(s);
        }
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("report document: ") + e.what());
    }
}

int exit_status(const Report& report)
{
    int worst = 0;
    for (const auto& t : report.targets)
        worst = std::max(worst, verdict_rank(t.verdict));
    return worst;
}

Report run(const RunConfig& config)
{
    config.validate();
    const Inputs in = load_inputs(config);

    Report report;
    report.config = config;
    report.nondeterministic = config.workers > 1;

    if (config.command == Command::Eval) {
        EvalSummary s;
        for (const auto& image : in.dataset) {
            const int p = classify(forward(in.net, image));
            s.predictions.push_back(p);
            ++s.images;
            if (image.label && *image.label == p)
                ++s.correct;
        }
        report.eval = std::move(s);
        return report;
    }

    std::vector<int> targets;
    if (config.target) {
        if (*config.target < 0 || *config.target >= in.net.label_count())
            throw PreconditionError("target label out of range");
        targets.push_back(*config.target);
    } else {
        for (int t = 0; t < in.net.label_count(); ++t)
            targets.push_back(t);
    }

    report.targets.resize(targets.size());
    const int target_threads = std::min<int>(config.workers, static_cast<int>(targets.size()));
    const int per_target_workers = std::max(1, config.workers / target_threads);
    if (target_threads <= 1) {
        for (std::size_t i = 0; i < targets.size(); ++i)
            report.targets[i] = run_target(config, in, targets[i], per_target_workers);
        return report;
    }

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    {
        std::vector<std::jthread> pool;
        for (int w = 0; w < target_threads; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < targets.size(); i = next.fetch_add(1)) {
                    try {
                        report.targets[i] = run_target(config, in, targets[i], per_target_workers);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error)
                            error = std::current_exception();
                    }
                }
            });
    }
    if (error)
        std::rethrow_exception(error);
    return report;
}

std::string human_summary(const Report& report)
{
    std::ostringstream out;
    out << to_string(report.config.command) << ": " << report.config.network << '\n';
    if (report.eval) {
        const auto& e = *report.eval;
        out << "  images " << e.images << ", correct " << e.correct << ", accuracy "
            << std::fixed << std::setprecision(4)
            << (e.images ? static_cast<double>(e.correct) / static_cast<double>(e.images) : 0.0)
            << '\n';
        return out.str();
    }
    for (const auto& t : report.targets) {
        out << "  target " << t.target << ": " << to_string(t.verdict);
        if (report.config.command == Command::Verify)
            out << "  rounds " << t.rounds << ", safe " << t.safe_rounds;
        out << "  positions " << t.diagnostics.positions_explored << '/' << t.diagnostics.positions_total;
        if (t.budget_exhausted)
            out << "  (budget exhausted)";
        out << '\n';
        if (t.trigger) {
            out << "    trigger at (" << t.trigger->spec.row << ", " << t.trigger->spec.col << "):";
            out << std::setprecision(3) << std::fixed;
            for (double v : t.trigger->values)
                out << ' ' << v;
            out << '\n';
            out.unsetf(std::ios::floatfield);
        }
        if (t.success_rate)
            out << "    validated success rate " << std::setprecision(4) << std::fixed << *t.success_rate
                << '\n';
        out.unsetf(std::ios::floatfield);
    }
    if (report.nondeterministic)
        out << "  (multi-worker run: Unsafe triggers may vary between runs)\n";
    return out.str();
}

}  // namespace bdverify
