// Batch front-end for the central-spin toolkit: predict magnon rates,
// simulate coherence and sideband dynamics, and run the fitting recipes on
// CSV data. One command per process; every output CSV/JSON is paired with a
// .meta.json that records the resolved configuration.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cspin/cspin.hpp"

namespace {

using nlohmann::json;
using namespace cspin;

[[noreturn]] void fail_config(const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
}

double num(const json& cfg, const std::string& key) {
    if (!cfg.contains(key) || !cfg.at(key).is_number())
        fail_config("missing numeric key '" + key + "'");
    return cfg.at(key).get<double>();
}

double num_or(const json& cfg, const std::string& key, double fallback) {
    if (!cfg.contains(key)) return fallback;
    if (!cfg.at(key).is_number()) fail_config("key '" + key + "' must be numeric");
    return cfg.at(key).get<double>();
}

bool flag_or(const json& cfg, const std::string& key, bool fallback) {
    if (!cfg.contains(key)) return fallback;
    if (!cfg.at(key).is_boolean()) fail_config("key '" + key + "' must be boolean");
    return cfg.at(key).get<bool>();
}

std::string str(const json& cfg, const std::string& key) {
    if (!cfg.contains(key) || !cfg.at(key).is_string())
        fail_config("missing string key '" + key + "'");
    return cfg.at(key).get<std::string>();
}

std::string str_or(const json& cfg, const std::string& key, const std::string& fallback) {
    if (!cfg.contains(key)) return fallback;
    if (!cfg.at(key).is_string()) fail_config("key '" + key + "' must be a string");
    return cfg.at(key).get<std::string>();
}

std::vector<double> num_list(const json& cfg, const std::string& key) {
    if (!cfg.contains(key) || !cfg.at(key).is_array())
        fail_config("missing list key '" + key + "'");
    std::vector<double> out;
    for (const auto& v : cfg.at(key)) {
        if (!v.is_number()) fail_config("list '" + key + "' must be numeric");
        out.push_back(v.get<double>());
    }
    return out;
}

// uniform grid described by <prefix>_start_<unit>/_stop_<unit>/_count keys
std::vector<double> grid(const json& cfg, const std::string& prefix,
                         const std::string& unit) {
    const double start = num(cfg, prefix + "_start_" + unit);
    const double stop = num(cfg, prefix + "_stop_" + unit);
    const double count_raw = num(cfg, prefix + "_count");
    const auto count = static_cast<std::size_t>(count_raw);
    if (count_raw != double(count)) fail_config("'" + prefix + "_count' must be an integer");
    if (count == 0) fail_config("'" + prefix + "_count' must be at least 1");
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i)
        out[i] = count == 1 ? start
                            : start + (stop - start) * double(i) / double(count - 1);
    return out;
}

species::SpeciesRegistry load_registry(const json& cfg) {
    species::SpeciesRegistry reg;
    if (!cfg.contains("registry")) {
        reg = species::default_registry();
    } else if (cfg.at("registry").is_string()) {
        reg = io::read_json(cfg.at("registry").get<std::string>())
                  .get<species::SpeciesRegistry>();
    } else if (cfg.at("registry").is_object()) {
        reg = cfg.at("registry").get<species::SpeciesRegistry>();
    } else {
        fail_config("'registry' must be an object or a path");
    }
    reg.validate();
    return reg;
}

magnon::EnsembleSpread load_spread(const json& cfg) {
    const double t2s = num_or(cfg, "t2_star_s", std::numeric_limits<double>::infinity());
    const double n_raw = num_or(cfg, "n_sigma", 41.0);
    const auto n = static_cast<std::size_t>(n_raw);
    if (n_raw != double(n) || n == 0) fail_config("'n_sigma' must be a positive integer");
    return magnon::make_spread(t2s, n);
}

// electron tilt at the operating splitting: given directly, or derived from
// the bare splitting and tilt through the frame construction
double resolve_sin_tilt(const json& cfg) {
    if (cfg.contains("sin_tilt")) return num(cfg, "sin_tilt");
    const double bare = num(cfg, "bare_splitting_hz");
    const double tilt0 = std::asin(num(cfg, "bare_sin_tilt"));
    const double target = num(cfg, "splitting_hz");
    const double shift = frames::overhauser_for_target(target, bare, tilt0);
    return frames::make_frame(bare, tilt0, shift).sin_tilt;
}

struct Ctx {
    json cfg;            // resolved configuration (config file + flag overrides)
    std::string command; // space-joined subcommand path
    std::string out_dir;
    long long seed = 0;

    std::string path_of(const std::string& file) const { return out_dir + "/" + file; }
};

json base_meta(const Ctx& ctx) {
    const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    return {{"command", ctx.command},
            {"config", ctx.cfg},
            {"seed", ctx.seed},
            {"toolkit_version", cspin::version},
            {"generated_unix_ms", now}};
}

void emit_csv(const Ctx& ctx, const std::string& name,
              const std::vector<std::string>& columns,
              const std::vector<std::vector<double>>& rows, json extra = json::object()) {
    io::write_csv(ctx.path_of(name + ".csv"), columns, rows);
    json meta = base_meta(ctx);
    meta["output"] = name + ".csv";
    meta["columns"] = columns;
    meta.update(extra);
    io::write_json(ctx.path_of(name + ".meta.json"), meta);
    std::printf("wrote %s\n", ctx.path_of(name + ".csv").c_str());
}

void emit_json(const Ctx& ctx, const std::string& name, const json& payload,
               json extra = json::object()) {
    io::write_json(ctx.path_of(name + ".json"), payload);
    json meta = base_meta(ctx);
    meta["output"] = name + ".json";
    meta.update(extra);
    io::write_json(ctx.path_of(name + ".meta.json"), meta);
    std::printf("wrote %s\n", ctx.path_of(name + ".json").c_str());
}

// ---------------------------------------------------------------- predict

void cmd_predict_omega_mag(const Ctx& ctx) {
    const json& cfg = ctx.cfg;
    const auto reg = load_registry(cfg);
    const double a_single = num(cfg, "a_single_hz");
    const double sin0 = num(cfg, "bare_sin_tilt");
    const double n_species = num(cfg, "n_species");
    const double rabi = num(cfg, "rabi_hz");
    const double bare = num(cfg, "bare_splitting_hz");
    const auto targets = num_list(cfg, "splittings_hz");
    if (targets.empty()) fail_config("'splittings_hz' must not be empty");
    const double omega_n =
        species::larmor_frequency(reg, str_or(cfg, "species", "75As"));
    const double tilt0 = std::asin(sin0);

    std::vector<std::vector<double>> rows;
    for (double w : targets) {
        const double shift = frames::overhauser_for_target(w, bare, tilt0);
        const auto frame = frames::make_frame(bare, tilt0, shift);
        const double a_nc = frames::split_coupling(a_single, frame).noncollinear_hz;
        const double omega_mag =
            magnon::magnon_rabi_rate(a_nc, rabi, omega_n, n_species);
        rows.push_back({w, frame.sin_tilt, a_nc, omega_mag});
    }

    json extra = json::object();
    bool distinct = false;
    for (std::size_t i = 1; i < targets.size(); ++i)
        if (targets[i] != targets[0]) distinct = true;
    if (distinct) {
        // one-parameter least squares of omega_mag = omega_mag0 * (bare / w)
        double sxy = 0.0, sxx = 0.0;
        for (const auto& r : rows) {
            const double x = bare / r[0];
            sxy += x * r[3];
            sxx += x * x;
        }
        const double scale = sxy / sxx;
        double rss = 0.0;
        for (const auto& r : rows) {
            const double d = r[3] - scale * bare / r[0];
            rss += d * d;
        }
        const double sigma =
            rows.size() > 1 ? std::sqrt(rss / double(rows.size() - 1) / sxx) : 0.0;
        extra["scaling_fit"] = {
            {"model", "omega_mag = omega_mag0 * bare_splitting / splitting"},
            {"omega_mag0_hz", scale},
            {"sigma_hz", sigma}};
    }
    emit_csv(ctx, str_or(cfg, "output_name", "predict_omega_mag"),
             {"omega_e_hz", "sin_tilt", "a_nc_hz", "omega_mag_hz"}, rows, extra);
}

// --------------------------------------------------------------- simulate

void cmd_simulate_visibility(const Ctx& ctx) {
    const json& cfg = ctx.cfg;
    coherence::VisibilityModel model;
    model.registry = load_registry(cfg);
    model.n_total = num(cfg, "n_total");
    model.sin_tilt = resolve_sin_tilt(cfg);
    model.technical.visibility_scale = num_or(cfg, "visibility_scale", 1.0);
    model.technical.field_scale = num_or(cfg, "field_scale", 1.0);
    model.technical.decay_time_s =
        num_or(cfg, "decay_time_s", std::numeric_limits<double>::infinity());
    model.validate();

    std::vector<coherence::PulseSequence> seqs;
    std::vector<std::string> columns = {"tau_s"};
    if (cfg.contains("sequences")) {
        for (const auto& s : cfg.at("sequences")) {
            seqs.push_back(coherence::sequence_from_string(s.get<std::string>()));
            columns.push_back(std::string("visibility_") +
                              coherence::to_string(seqs.back()));
        }
    } else {
        seqs.push_back(coherence::PulseSequence::cp1);
        columns.push_back("visibility_CP1");
    }
    if (seqs.empty()) fail_config("'sequences' must not be empty");

    const auto times = grid(cfg, "time", "s");
    std::vector<std::vector<double>> rows;
    for (double t : times) {
        std::vector<double> row = {t};
        for (auto seq : seqs)
            row.push_back(coherence::visibility_fit_model(model, seq, t));
        rows.push_back(row);
    }
    emit_csv(ctx, str_or(cfg, "output_name", "visibility"), columns, rows);
}

void cmd_simulate_sideband_map(const Ctx& ctx) {
    const json& cfg = ctx.cfg;
    const auto reg = load_registry(cfg);
    const double n_total = num(cfg, "n_total");
    const double a_single = num(cfg, "a_single_hz");
    const double sin_tilt = resolve_sin_tilt(cfg);
    const double rabi = num(cfg, "rabi_hz");
    const double gamma1 = num_or(cfg, "gamma1_per_s", 0.0);
    const double dephasing = num_or(cfg, "dephasing_per_s", 0.0);
    const std::string ref_name = str_or(cfg, "species", "75As");
    const double a_ref = reg.find(ref_name).hyperfine_A_hz;
    const double csum = reg.abundance_sum();

    std::vector<magnon::SpectralLine> lines;
    if (flag_or(cfg, "include_carrier", true))
        lines.push_back({"carrier", 0.0, rabi, gamma1, dephasing});
    for (const auto& s : reg.species) {
        // per-nucleus couplings scale with the species hyperfine constant
        const double a_nc = a_single * s.hyperfine_A_hz / a_ref * sin_tilt;
        const double n_j = n_total * s.abundance / csum;
        const double w_n = species::larmor_frequency(s, reg.field_t);
        const double o_mag = magnon::magnon_rabi_rate(a_nc, rabi, w_n, n_j);
        lines.push_back({s.name + "_neg", -w_n, o_mag, gamma1, dephasing});
        lines.push_back({s.name + "_pos", +w_n, o_mag, gamma1, dephasing});
    }

    const auto detunings = grid(cfg, "detuning", "hz");
    const auto times = grid(cfg, "time", "s");
    const auto spread = load_spread(cfg);
    const auto map = magnon::simulate_sideband_spectrum(lines, detunings, times, spread);

    std::vector<std::string> columns = {"detuning_hz"};
    for (double t : times) columns.push_back("pop_at_" + io::format_number(t) + "s");
    std::vector<std::vector<double>> rows;
    for (std::size_t d = 0; d < detunings.size(); ++d) {
        std::vector<double> row = {detunings[d]};
        row.insert(row.end(), map.population[d].begin(), map.population[d].end());
        rows.push_back(row);
    }

    json extra;
    extra["time_s"] = times;
    extra["warnings"] = map.warnings;
    json jlines = json::array();
    for (const auto& l : lines)
        jlines.push_back({{"label", l.label},
                          {"center_hz", l.center_hz},
                          {"rabi_hz", l.rabi_hz}});
    extra["lines"] = jlines;
    emit_csv(ctx, str_or(cfg, "output_name", "sideband_map"), columns, rows, extra);
}

void cmd_simulate_rabi(const Ctx& ctx) {
    const json& cfg = ctx.cfg;
    magnon::LindbladParams params;
    params.rabi_hz = num(cfg, "rabi_hz");
    params.detuning_hz = num_or(cfg, "detuning_hz", 0.0);
    params.spin_flip_per_s = num_or(cfg, "gamma1_per_s", 0.0);
    params.dephasing_per_s = num_or(cfg, "dephasing_per_s", 0.0);
    params.validate();
    const auto spread = load_spread(cfg);
    const auto times = grid(cfg, "time", "s");
    const auto pop = magnon::ensemble_average_evolution(
        magnon::DensityMatrix2::ground(), params, spread, times);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < times.size(); ++i) rows.push_back({times[i], pop[i]});
    emit_csv(ctx, str_or(cfg, "output_name", "rabi"), {"t_s", "population"}, rows);
}

// -------------------------------------------------------------------- fit

fit::SidebandSpectrum load_spectrum(const std::string& path, fit::SidebandSign sign,
                                    fit::ElectronState state) {
    const auto table = io::read_csv(path);
    fit::SidebandSpectrum s;
    s.sign = sign;
    s.initial_state = state;
    s.detuning_hz = table.column("detuning_hz");
    for (double c : table.column("counts")) s.counts.push_back({c});
    s.validate();
    return s;
}

void emit_gaussian_residuals(const Ctx& ctx, const std::string& name,
                             const fit::SidebandSpectrum& s, const fit::FitResult& line) {
    const double center = line.estimate("center_hz");
    const double width = line.estimate("width_hz");
    const double amp = line.estimate("amplitude");
    const double bg = line.estimate("background");
    const auto counts = s.time_summed();
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < s.detuning_hz.size(); ++i) {
        const double z = (s.detuning_hz[i] - center) / width;
        const double model = bg + amp * std::exp(-0.5 * z * z);
        rows.push_back({s.detuning_hz[i], counts[i], model, counts[i] - model});
    }
    emit_csv(ctx, name, {"detuning_hz", "counts", "model", "residual"}, rows);
}

void cmd_fit_knight(const Ctx& ctx) {
    const json& cfg = ctx.cfg;
    const auto reg = load_registry(cfg);
    const double hyperfine =
        num_or(cfg, "hyperfine_A_hz",
               reg.find(str_or(cfg, "species", "75As")).hyperfine_A_hz);
    const auto neg_up = load_spectrum(str(cfg, "neg_up_csv"),
                                      fit::SidebandSign::negative,
                                      fit::ElectronState::up);
    const auto neg_down = load_spectrum(str(cfg, "neg_down_csv"),
                                        fit::SidebandSign::negative,
                                        fit::ElectronState::down);
    const auto pos_up = load_spectrum(str(cfg, "pos_up_csv"),
                                      fit::SidebandSign::positive,
                                      fit::ElectronState::up);
    const auto pos_down = load_spectrum(str(cfg, "pos_down_csv"),
                                        fit::SidebandSign::positive,
                                        fit::ElectronState::down);

    const auto res =
        fit::knight_shift_analysis(neg_up, neg_down, pos_up, pos_down, hyperfine);

    json payload = {
        {"a_single_hz", res.a_single_hz},
        {"a_single_sigma_hz", res.a_single_sigma_hz},
        {"n_species", res.n_species},
        {"n_species_sigma", res.n_species_sigma},
        {"n_total", res.n_total},
        {"n_total_sigma", res.n_total_sigma},
        {"negative",
         {{"difference_hz", res.negative.difference_hz},
          {"sigma_hz", res.negative.sigma_hz}}},
        {"positive",
         {{"difference_hz", res.positive.difference_hz},
          {"sigma_hz", res.positive.sigma_hz}}},
        {"line_fits", json::array()},
        {"warnings", res.warnings}};
    const char* tags[4] = {"neg_up", "neg_down", "pos_up", "pos_down"};
    for (std::size_t i = 0; i < 4; ++i) {
        json lf = io::fit_to_json(res.line_fits[i]);
        lf["line"] = tags[i];
        payload["line_fits"].push_back(lf);
    }
    const std::string name = str_or(cfg, "output_name", "knight");
    emit_json(ctx, name, payload);
    const std::array<const fit::SidebandSpectrum*, 4> spectra = {&neg_up, &neg_down,
                                                                 &pos_up, &pos_down};
    for (std::size_t i = 0; i < 4; ++i)
        emit_gaussian_residuals(ctx, name + "_" + tags[i] + "_residuals", *spectra[i],
                                res.line_fits[i]);
}

void cmd_fit_visibility(const Ctx& ctx) {
    const json& cfg = ctx.cfg;
    const auto reg = load_registry(cfg);
    const double n_total = num(cfg, "n_total");
    if (!cfg.contains("datasets") || !cfg.at("datasets").is_array() ||
        cfg.at("datasets").empty())
        fail_config("'datasets' must be a non-empty list");

    std::vector<coherence::VisibilityDataset> datasets;
    std::vector<std::string> warnings;
    for (const auto& entry : cfg.at("datasets")) {
        coherence::VisibilityDataset d;
        d.label = str_or(entry, "label",
                         "dataset " + std::to_string(datasets.size()));
        d.sequence = coherence::sequence_from_string(str(entry, "sequence"));
        d.splitting_hz = num(entry, "splitting_hz");
        const auto table = io::read_csv(str(entry, "csv"));
        d.time_s = table.column("tau_s");
        d.visibility = table.column(str_or(entry, "column", "visibility"));
        if (table.has_column("sigma"))
            d.sigma = table.column("sigma");
        else
            warnings.push_back("dataset '" + d.label +
                               "': no sigma column, fitted unweighted");
        datasets.push_back(std::move(d));
    }

    const auto res = coherence::fit_visibility(datasets, reg, n_total);

    json payload;
    payload["groups"] = json::array();
    for (const auto& g : res.groups)
        payload["groups"].push_back({{"splitting_hz", g.splitting_hz},
                                     {"sin_tilt", g.sin_tilt},
                                     {"sin_tilt_sigma", g.sin_tilt_sigma}});
    payload["field_scale"] = res.field_scale;
    payload["field_scale_sigma"] = res.field_scale_sigma;
    payload["per_dataset"] = json::array();
    for (std::size_t i = 0; i < res.per_dataset.size(); ++i) {
        const auto& s = res.per_dataset[i];
        payload["per_dataset"].push_back(
            {{"label", datasets[i].label},
             {"visibility_scale", s.visibility_scale},
             {"visibility_scale_sigma", s.visibility_scale_sigma},
             {"decay_time_s", s.decay_time_s},
             {"decay_time_sigma_s", s.decay_time_sigma_s}});
    }
    payload["detail"] = io::fit_to_json(res.detail);
    payload["warnings"] = warnings;
    const std::string name = str_or(cfg, "output_name", "visibility_fit");
    emit_json(ctx, name, payload);

    for (std::size_t i = 0; i < datasets.size(); ++i) {
        const auto& d = datasets[i];
        coherence::VisibilityModel model;
        model.registry = reg;
        model.n_total = n_total;
        for (const auto& g : res.groups)
            if (std::abs(g.splitting_hz - d.splitting_hz) <=
                1e-9 * std::abs(g.splitting_hz))
                model.sin_tilt = g.sin_tilt;
        model.technical.field_scale = res.field_scale;
        model.technical.visibility_scale = res.per_dataset[i].visibility_scale;
        model.technical.decay_time_s =
            res.per_dataset[i].decay_time_s > 0.0
                ? res.per_dataset[i].decay_time_s
                : std::numeric_limits<double>::infinity();
        std::vector<std::vector<double>> rows;
        for (std::size_t k = 0; k < d.time_s.size(); ++k) {
            const double m =
                coherence::visibility_fit_model(model, d.sequence, d.time_s[k]);
            rows.push_back({d.time_s[k], d.visibility[k], m, d.visibility[k] - m});
        }
        emit_csv(ctx, name + "_residuals_" + std::to_string(i),
                 {"tau_s", "visibility", "model", "residual"}, rows);
    }
}

void cmd_fit_echo(const Ctx& ctx) {
    const json& cfg = ctx.cfg;
    const auto table = io::read_csv(str(cfg, "csv"));
    const auto times = table.column("tau_s");
    const auto vis = table.column("visibility");
    const auto res = coherence::fit_echo_decay(times, vis);
    json payload = {{"t2_s", res.value.t2_s},
                    {"t2_sigma_s", res.t2_sigma_s},
                    {"stretch", res.value.stretch},
                    {"stretch_sigma", res.stretch_sigma},
                    {"detail", io::fit_to_json(res.detail)}};
    const std::string name = str_or(cfg, "output_name", "echo_fit");
    emit_json(ctx, name, payload);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double m = coherence::echo_envelope(res.value, times[i]);
        rows.push_back({times[i], vis[i], m, vis[i] - m});
    }
    emit_csv(ctx, name + "_residuals", {"tau_s", "visibility", "model", "residual"},
             rows);
}

void cmd_fit_magnon(const Ctx& ctx) {
    const json& cfg = ctx.cfg;
    const auto neg = io::read_csv(str(cfg, "neg_csv"));
    const auto pos = io::read_csv(str(cfg, "pos_csv"));
    const auto t_neg = neg.column("t_s");
    const auto p_neg = neg.column("population");
    const auto t_pos = pos.column("t_s");
    const auto p_pos = pos.column("population");
    const double gamma1 = num(cfg, "gamma1_per_s");
    const auto spread = load_spread(cfg);

    const auto res = fit::fit_magnon_rabi(t_neg, p_neg, t_pos, p_pos, gamma1, spread);
    json payload = {{"rabi_neg_hz", res.rabi_neg_hz},
                    {"rabi_neg_sigma_hz", res.rabi_neg_sigma_hz},
                    {"rabi_pos_hz", res.rabi_pos_hz},
                    {"rabi_pos_sigma_hz", res.rabi_pos_sigma_hz},
                    {"dephasing_per_s", res.dephasing_per_s},
                    {"dephasing_sigma_per_s", res.dephasing_sigma_per_s},
                    {"mean_rabi_hz", res.mean_rabi_hz},
                    {"mean_rabi_sigma_hz", res.mean_rabi_sigma_hz},
                    {"detail", io::fit_to_json(res.detail)}};
    const std::string name = str_or(cfg, "output_name", "magnon_fit");
    emit_json(ctx, name, payload);

    auto residuals = [&](const std::string& tag, const std::vector<double>& ts,
                         const std::vector<double>& ps, double rabi) {
        magnon::LindbladParams params;
        params.rabi_hz = rabi;
        params.spin_flip_per_s = gamma1;
        params.dephasing_per_s = res.dephasing_per_s;
        const auto model = magnon::ensemble_average_evolution(
            magnon::DensityMatrix2::ground(), params, spread, ts);
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < ts.size(); ++i)
            rows.push_back({ts[i], ps[i], model[i], ps[i] - model[i]});
        emit_csv(ctx, name + "_" + tag + "_residuals",
                 {"t_s", "population", "model", "residual"}, rows);
    };
    residuals("neg", t_neg, p_neg, res.rabi_neg_hz);
    residuals("pos", t_pos, p_pos, res.rabi_pos_hz);
}

void cmd_fit_background(const Ctx& ctx) {
    const json& cfg = ctx.cfg;
    const auto table = io::read_csv(str(cfg, "csv"));
    const auto times = table.column("t_s");
    const auto pop = table.column("population");
    const auto res = fit::fit_background_saturation(times, pop);
    const std::string name = str_or(cfg, "output_name", "background_fit");
    emit_json(ctx, name, io::fit_to_json(res));
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double m =
            magnon::saturation_background(res.estimate("spin_flip_per_s"), times[i]) +
            res.estimate("background");
        rows.push_back({times[i], pop[i], m, pop[i] - m});
    }
    emit_csv(ctx, name + "_residuals", {"t_s", "population", "model", "residual"},
             rows);
}

void print_error(const std::string& type, const std::string& message) {
    const json e = {{"error", {{"type", type}, {"message", message}}}};
    std::fprintf(stderr, "%s\n", e.dump().c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"central-spin qubit toolkit: predict, simulate, and fit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_flag;
    long long seed_flag = -1;
    app.add_option("--config", config_path, "JSON configuration file for the run");
    app.add_option("--out", out_flag,
                   "output directory (overrides config 'out_dir' and CSPIN_OUT_DIR)");
    app.add_option("--seed", seed_flag, "seed recorded in run metadata (overrides config)");

    std::function<void(const Ctx&)> selected;
    std::string command;
    auto pick = [&](CLI::App* sub, const std::string& name,
                    std::function<void(const Ctx&)> fn) {
        sub->callback([&selected, &command, name, fn]() {
            selected = fn;
            command = name;
        });
    };

    pick(app.add_subcommand("predict-omega-mag",
                            "magnon Rabi rates across electron splittings"),
         "predict-omega-mag", cmd_predict_omega_mag);

    auto* sim = app.add_subcommand("simulate", "forward models to plot-ready CSV");
    sim->require_subcommand(1);
    pick(sim->add_subcommand("visibility", "decoupling visibility vs total time"),
         "simulate visibility", cmd_simulate_visibility);
    pick(sim->add_subcommand("sideband-map", "population map over detuning and time"),
         "simulate sideband-map", cmd_simulate_sideband_map);
    pick(sim->add_subcommand("rabi", "ensemble-averaged sideband Rabi trace"),
         "simulate rabi", cmd_simulate_rabi);

    auto* fitcmd = app.add_subcommand("fit", "fitting recipes on CSV data");
    fitcmd->require_subcommand(1);
    pick(fitcmd->add_subcommand("knight", "Knight-shift chain on four spectra"),
         "fit knight", cmd_fit_knight);
    pick(fitcmd->add_subcommand("visibility", "joint visibility fit"),
         "fit visibility", cmd_fit_visibility);
    pick(fitcmd->add_subcommand("echo", "stretched-exponential echo decay"),
         "fit echo", cmd_fit_echo);
    pick(fitcmd->add_subcommand("magnon", "two-sideband exchange fit"),
         "fit magnon", cmd_fit_magnon);
    pick(fitcmd->add_subcommand("background", "spin-flip saturation background"),
         "fit background", cmd_fit_background);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage", e.what());
        return e.get_exit_code() == 0 ? 1 : e.get_exit_code();
    }

    try {
        Ctx ctx;
        ctx.cfg = config_path.empty() ? json::object() : io::read_json(config_path);
        if (!ctx.cfg.is_object()) fail_config("top level must be a JSON object");
        ctx.command = command;

        if (!out_flag.empty())
            ctx.out_dir = out_flag;
        else if (ctx.cfg.contains("out_dir"))
            ctx.out_dir = str(ctx.cfg, "out_dir");
        else if (const char* env = std::getenv("CSPIN_OUT_DIR"))
            ctx.out_dir = env;
        else
            ctx.out_dir = ".";

        if (seed_flag >= 0)
            ctx.seed = seed_flag;
        else if (ctx.cfg.contains("seed")) {
            if (!ctx.cfg.at("seed").is_number_integer())
                fail_config("'seed' must be an integer");
            ctx.seed = ctx.cfg.at("seed").get<long long>();
        }
        // record the effective values so the metadata alone reproduces the run
        ctx.cfg["out_dir"] = ctx.out_dir;
        ctx.cfg["seed"] = ctx.seed;

        selected(ctx);
        return 0;
    } catch (const io::ingestion_error& e) {
        print_error("ingestion", e.what());
    } catch (const std::invalid_argument& e) {
        print_error("config", e.what());
    } catch (const fit::solver_error& e) {
        print_error("solver", e.what());
    } catch (const std::exception& e) {
        print_error("runtime", e.what());
    }
    return 1;
}
