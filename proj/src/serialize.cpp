#include "qflow/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "qflow/mdp.hpp"

namespace qflow::io {

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    return f;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    return f;
}

void expect_tag(std::istream& in, const std::string& want, const std::string& path) {
    std::string tag;
    in >> tag;
    if (tag != want) throw std::runtime_error(path + ": expected '" + want + "', got '" + tag + "'");
}

std::string fmt9(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9f", x);
    return buf;
}

void renormalize(std::vector<std::pair<std::uint16_t, double>>& row) {
    double sum = 0.0;
    for (const auto& [_, p] : row) sum += p;
    if (sum <= 0.0) throw std::runtime_error("kernel row with zero mass");
    for (auto& [_, p] : row) p /= sum;
}

void renormalize_int(std::vector<std::pair<int, double>>& row) {
    double sum = 0.0;
    for (const auto& [_, p] : row) sum += p;
    if (sum <= 0.0) throw std::runtime_error("kernel row with zero mass");
    for (auto& [_, p] : row) p /= sum;
}

}  // namespace

void save_client_kernel(const std::string& path, const model::ClientKernel& k, double gamma) {
    auto f = open_out(path);
    f << "qflow-client-kernel 1 " << mdp::kNumLabels << " 2 " << gamma << "\n";
    for (int s = 0; s < mdp::kNumLabels; ++s) {
        for (int a = 0; a < 2; ++a) {
            const auto& row = k.row(s, a);
            f << s << ' ' << a << ' ' << (k.seen(s, a) ? 1 : 0) << ' ' << row.size();
            for (const auto& [s2, p] : row) f << ' ' << s2 << ':' << fmt9(p);
            f << '\n';
        }
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

model::ClientKernel load_client_kernel(const std::string& path) {
    auto f = open_in(path);
    expect_tag(f, "qflow-client-kernel", path);
    int version = 0, k_states = 0, n_actions = 0;
    double gamma = 0.0;
    f >> version >> k_states >> n_actions >> gamma;
    if (version != 1 || k_states != mdp::kNumLabels || n_actions != 2)
        throw std::runtime_error(path + ": bad client-kernel header");
    std::vector<model::ClientKernel::Row> rows(static_cast<std::size_t>(mdp::kNumLabels) * 2);
    std::vector<bool> observed(rows.size(), false);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        int s = 0, a = 0, seen = 0;
        std::size_t n = 0;
        if (!(f >> s >> a >> seen >> n)) throw std::runtime_error(path + ": truncated kernel");
        auto& row = rows[static_cast<std::size_t>(s) * 2 + static_cast<std::size_t>(a)];
        observed[static_cast<std::size_t>(s) * 2 + static_cast<std::size_t>(a)] = seen != 0;
        row.resize(n);
        for (auto& [s2, p] : row) {
            char colon = 0;
            int label = 0;
            if (!(f >> label >> colon >> p) || colon != ':')
                throw std::runtime_error(path + ": bad kernel row");
            s2 = static_cast<std::uint16_t>(label);
        }
        renormalize(row);
    }
    return model::kernel_from_rows(std::move(rows), std::move(observed));
}

void save_traces(const std::string& path, const model::TraceLog& traces) {
    auto f = open_out(path);
    f << "qflow-traces 1 " << traces.client_tuples.size() << ' ' << traces.system_states.size()
      << '\n';
    for (const auto& t : traces.client_tuples)
        f << t.s << ' ' << static_cast<int>(t.a) << ' ' << t.s2 << '\n';
    for (const auto& s : traces.system_states) {
        f << s.size();
        for (std::uint16_t l : s) f << ' ' << l;
        f << '\n';
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

model::TraceLog load_traces(const std::string& path) {
    auto f = open_in(path);
    expect_tag(f, "qflow-traces", path);
    int version = 0;
    std::size_t n_tuples = 0, n_states = 0;
    f >> version >> n_tuples >> n_states;
    if (version != 1) throw std::runtime_error(path + ": bad traces header");
    model::TraceLog log;
    log.client_tuples.resize(n_tuples);
    for (auto& t : log.client_tuples) {
        int s = 0, a = 0, s2 = 0;
        if (!(f >> s >> a >> s2)) throw std::runtime_error(path + ": truncated traces");
        t = {static_cast<std::uint16_t>(s), static_cast<std::uint8_t>(a),
             static_cast<std::uint16_t>(s2)};
    }
    log.system_states.resize(n_states);
    for (auto& s : log.system_states) {
        std::size_t n = 0;
        if (!(f >> n)) throw std::runtime_error(path + ": truncated system states");
        s.resize(n);
        for (auto& l : s) {
            int v = 0;
            if (!(f >> v)) throw std::runtime_error(path + ": truncated system states");
            l = static_cast<std::uint16_t>(v);
        }
    }
    return log;
}

void save_system(const std::string& path, const SystemArtifacts& sys) {
    auto f = open_out(path);
    f << "qflow-system-kernel 1 " << sys.kernel.n_states << ' ' << sys.kernel.n_actions << ' '
      << sys.gamma << '\n';
    f << "slots " << sys.sp.slots << '\n';
    for (const auto& s : sys.sp.states) {
        for (std::size_t i = 0; i < s.size(); ++i) f << (i ? " " : "") << s[i];
        f << '\n';
    }
    f << "actions\n";
    for (const auto& a : sys.actions) {
        f << a.size();
        for (int slot : a) f << ' ' << slot;
        f << '\n';
    }
    f << "rows\n";
    for (int s = 0; s < sys.kernel.n_states; ++s) {
        for (int a = 0; a < sys.kernel.n_actions; ++a) {
            const auto& row = sys.kernel.row(s, a);
            f << s << ' ' << a << ' ' << fmt9(sys.kernel.reward_at(s, a)) << ' ' << row.size();
            for (const auto& [s2, p] : row) f << ' ' << s2 << ':' << fmt9(p);
            f << '\n';
        }
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

SystemArtifacts load_system(const std::string& path) {
    auto f = open_in(path);
    expect_tag(f, "qflow-system-kernel", path);
    int version = 0, K = 0, A = 0;
    double gamma = 0.0;
    f >> version >> K >> A >> gamma;
    if (version != 1 || K < 1 || A < 1) throw std::runtime_error(path + ": bad system header");
    expect_tag(f, "slots", path);
    int slots = 0;
    f >> slots;
    std::vector<std::vector<std::uint16_t>> states(static_cast<std::size_t>(K));
    for (auto& s : states) {
        s.resize(static_cast<std::size_t>(slots));
        for (auto& l : s) {
            int v = 0;
            if (!(f >> v)) throw std::runtime_error(path + ": truncated states");
            l = static_cast<std::uint16_t>(v);
        }
    }
    expect_tag(f, "actions", path);
    SystemArtifacts out;
    out.gamma = gamma;
    out.actions.resize(static_cast<std::size_t>(A));
    for (auto& a : out.actions) {
        std::size_t n = 0;
        if (!(f >> n)) throw std::runtime_error(path + ": truncated actions");
        a.resize(n);
        for (auto& slot : a)
            if (!(f >> slot)) throw std::runtime_error(path + ": truncated actions");
    }
    expect_tag(f, "rows", path);
    out.kernel.n_states = K;
    out.kernel.n_actions = A;
    out.kernel.transitions.resize(static_cast<std::size_t>(K) * static_cast<std::size_t>(A));
    out.kernel.expected_reward.assign(static_cast<std::size_t>(K) * static_cast<std::size_t>(A), 0.0);
    for (long i = 0; i < static_cast<long>(K) * A; ++i) {
        int s = 0, a = 0;
        double r = 0.0;
        std::size_t n = 0;
        if (!(f >> s >> a >> r >> n)) throw std::runtime_error(path + ": truncated rows");
        auto& row = out.kernel.transitions[static_cast<std::size_t>(s) * static_cast<std::size_t>(A) +
                                           static_cast<std::size_t>(a)];
        row.resize(n);
        for (auto& [s2, p] : row) {
            char colon = 0;
            if (!(f >> s2 >> colon >> p) || colon != ':')
                throw std::runtime_error(path + ": bad system row");
        }
        renormalize_int(row);
        out.kernel.expected_reward[static_cast<std::size_t>(s) * static_cast<std::size_t>(A) +
                                   static_cast<std::size_t>(a)] = r;
    }
    out.sp = model::make_state_set(std::move(states));
    return out;
}

void save_values(const std::string& path, const model::ValueSolution& sol, int n_actions,
                 double gamma) {
    auto f = open_out(path);
    f << "qflow-values 1 " << sol.v.size() << ' ' << n_actions << ' ' << gamma << '\n';
    for (std::size_t s = 0; s < sol.v.size(); ++s)
        f << s << ' ' << fmt9(sol.v[s]) << ' ' << sol.policy[s] << '\n';
    if (!f) throw std::runtime_error("write failed: " + path);
}

model::ValueSolution load_values(const std::string& path) {
    auto f = open_in(path);
    expect_tag(f, "qflow-values", path);
    int version = 0, K = 0, A = 0;
    double gamma = 0.0;
    f >> version >> K >> A >> gamma;
    if (version != 1 || K < 1) throw std::runtime_error(path + ": bad values header");
    model::ValueSolution sol;
    sol.v.resize(static_cast<std::size_t>(K));
    sol.policy.resize(static_cast<std::size_t>(K));
    for (int i = 0; i < K; ++i) {
        int s = 0;
        if (!(f >> s >> sol.v[static_cast<std::size_t>(s)] >> sol.policy[static_cast<std::size_t>(s)]))
            throw std::runtime_error(path + ": truncated values");
    }
    sol.converged = true;
    return sol;
}

void save_mfg(const std::string& path, const MfgArtifacts& mfg) {
    auto f = open_out(path);
    f << "qflow-mfg 1 " << mdp::kNumLabels << ' ' << mfg.bids.size() << ' ' << mfg.gamma << '\n';
    f << "bids";
    for (double b : mfg.bids.grid) f << ' ' << fmt9(b);
    f << "\nrho";
    for (double p : mfg.rho.pmf) f << ' ' << fmt9(p);
    f << "\ntable\n";
    for (int s = 0; s < mdp::kNumLabels; ++s)
        f << s << ' ' << fmt9(mfg.solution.v[static_cast<std::size_t>(s)]) << ' '
          << fmt9(mfg.solution.bid[static_cast<std::size_t>(s)]) << '\n';
    if (!f) throw std::runtime_error("write failed: " + path);
}

MfgArtifacts load_mfg(const std::string& path) {
    auto f = open_in(path);
    expect_tag(f, "qflow-mfg", path);
    int version = 0, labels = 0, nb = 0;
    double gamma = 0.0;
    f >> version >> labels >> nb >> gamma;
    if (version != 1 || labels != mdp::kNumLabels || nb < 2)
        throw std::runtime_error(path + ": bad mfg header");
    MfgArtifacts out;
    out.gamma = gamma;
    expect_tag(f, "bids", path);
    out.bids.grid.resize(static_cast<std::size_t>(nb));
    for (auto& b : out.bids.grid)
        if (!(f >> b)) throw std::runtime_error(path + ": truncated bids");
    expect_tag(f, "rho", path);
    out.rho.pmf.resize(static_cast<std::size_t>(nb));
    for (auto& p : out.rho.pmf)
        if (!(f >> p)) throw std::runtime_error(path + ": truncated rho");
    double sum = 0.0;
    for (double p : out.rho.pmf) sum += p;
    if (sum > 0.0)
        for (auto& p : out.rho.pmf) p /= sum;
    expect_tag(f, "table", path);
    out.solution.v.resize(mdp::kNumLabels);
    out.solution.bid.resize(mdp::kNumLabels);
    out.solution.delta.assign(mdp::kNumLabels, 0.0);
    for (int i = 0; i < mdp::kNumLabels; ++i) {
        int s = 0;
        if (!(f >> s >> out.solution.v[static_cast<std::size_t>(s)] >>
              out.solution.bid[static_cast<std::size_t>(s)]))
            throw std::runtime_error(path + ": truncated table");
    }
    out.solution.converged = true;
    return out;
}

void save_index(const std::string& path, const indexing::IndexTable& table) {
    auto f = open_out(path);
    f << "label,index\n";
    for (std::size_t s = 0; s < table.index.size(); ++s) f << s << ',' << table.index[s] << '\n';
    if (!f) throw std::runtime_error("write failed: " + path);
}

indexing::IndexTable load_index(const std::string& path) {
    auto f = open_in(path);
    std::string header;
    std::getline(f, header);
    if (header != "label,index") throw std::runtime_error(path + ": bad index header");
    indexing::IndexTable table;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error(path + ": bad index row");
        const std::size_t label = std::stoul(line.substr(0, comma));
        const int idx = std::stoi(line.substr(comma + 1));
        if (table.index.size() <= label) table.index.resize(label + 1, 0);
        table.index[label] = idx;
    }
    return table;
}

}  // namespace qflow::io
