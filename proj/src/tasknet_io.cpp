// Line-oriented task network files: one record per line, whitespace
// separated, '#' starts a comment. Layout documented in docs/formats.md.
#include <charconv>
#include <cstring>
#include <map>
#include <sstream>

#include "psesim/tasknet.hpp"

namespace psesim::tasknet {

namespace {

std::string fmt_num(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_num(const std::string& s, int line) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError(line, "bad number '" + s + "'");
  return v;
}

std::string fmt_bools(const std::set<bool>& vals) {
  std::string out;
  for (bool b : vals) {
    if (!out.empty()) out += ",";
    out += b ? "true" : "false";
  }
  return out.empty() ? "-" : out;
}

std::set<bool> parse_bools(const std::string& s, int line) {
  std::set<bool> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "true")
      out.insert(true);
    else if (item == "false")
      out.insert(false);
    else
      throw ParseError(line, "bad flag value '" + item + "'");
  }
  return out;
}

std::string opt_field(const std::string& s) { return s.empty() ? "-" : s; }
std::string read_opt(const std::string& s) { return s == "-" ? "" : s; }

const std::map<std::string, Mode> kModes = {
    {"idle", Mode::Idle},
    {"sync", Mode::Sync},
    {"planning", Mode::Planning},
    {"driving", Mode::Driving},
    {"low-power", Mode::LowPower},
};

const std::map<std::string, TaskCategory> kCategories = {
    {"generic", TaskCategory::Generic},
    {"map-sync", TaskCategory::MapSync},
    {"backup", TaskCategory::Backup},
    {"explore-planning", TaskCategory::ExplorePlanning},
    {"formation-planning", TaskCategory::FormationPlanning},
    {"explore-drive", TaskCategory::ExploreDrive},
    {"formation-parent", TaskCategory::FormationParent},
    {"formation-drive", TaskCategory::FormationDrive},
    {"stop", TaskCategory::Stop},
    {"sleep", TaskCategory::Sleep},
};

const std::map<std::string, PredOutcome> kOutcomes = {
    {"completed", PredOutcome::Completed}, {"stopped", PredOutcome::Stopped},
    {"failed", PredOutcome::Failed},       {"aborted", PredOutcome::Aborted},
    {"dropped", PredOutcome::Dropped},
};

std::string executor_field(const Executor& e) { return e.str(); }

Executor parse_executor(const std::string& s) {
  if (s == "@LEADER") return Executor::leader();
  if (s == "@SURVIVOR") return Executor::survivor();
  return Executor::on(s);
}

std::string task_flags(const TaskTemplate& t) {
  std::string out;
  auto add = [&](const std::string& f) {
    if (!out.empty()) out += ",";
    out += f;
  };
  if (t.stoppable) add("stoppable");
  if (!t.stop_task.empty()) add("stop=" + t.stop_task);
  if (t.pinned_to_parent) add("pinned");
  if (t.clears_coordination) add("clears-coord");
  return out.empty() ? "-" : out;
}

void emit_task(std::ostringstream& os, const TaskTemplate& t,
               const std::string& parent) {
  os << "task " << t.id << " " << executor_field(t.executor) << " "
     << t.priority << " " << fmt_num(t.preferred_start) << " "
     << fmt_num(t.expected_duration) << " " << mode_name(t.mode) << " "
     << category_name(t.category) << " " << opt_field(t.command) << " "
     << opt_field(t.cleanup_command) << " " << opt_field(t.detail_command)
     << " " << t.instance_count << " " << t.retry_budget << " "
     << task_flags(t) << " " << opt_field(parent) << "\n";
  for (const auto& c : t.constraints) {
    if (c.scope == ConstraintScope::Precedence) {
      os << "precedence " << t.id << " " << c.predecessor << " ";
      std::string accepts;
      for (PredOutcome o : c.accept) {
        if (!accepts.empty()) accepts += ",";
        accepts += pred_outcome_name(o);
      }
      os << accepts << "\n";
      continue;
    }
    os << "constraint " << t.id << " "
       << (c.scope == ConstraintScope::PreExecution ? "pre" : "maint") << " "
       << (c.locus == ConstraintLocus::Local ? "local" : "multi") << " ";
    if (c.allowed.empty()) {
      os << "num " << c.variable.owner << " " << c.variable.name << " "
         << fmt_num(c.lower) << " " << fmt_num(c.upper) << "\n";
    } else {
      os << "flag " << c.variable.owner << " " << c.variable.name << " "
         << fmt_bools(c.allowed) << "\n";
    }
  }
  for (const auto& im : t.impacts) {
    const char* when = im.model == ImpactModel::DeltaAtStart ? "start"
                       : im.model == ImpactModel::DeltaAtEnd ? "end"
                                                             : "rate";
    if (im.model == ImpactModel::LinearRate) {
      os << "impact " << t.id << " " << im.variable.owner << " "
         << im.variable.name << " rate num " << fmt_num(im.amount) << "\n";
    } else {
      // Deltas carry either a numeric amount or a flag write; the numeric
      // field 0 with flag form means "flag impact".
      if (im.amount != 0.0) {
        os << "impact " << t.id << " " << im.variable.owner << " "
           << im.variable.name << " " << when << " num " << fmt_num(im.amount)
           << "\n";
      } else {
        os << "impact " << t.id << " " << im.variable.owner << " "
           << im.variable.name << " " << when << " flag "
           << (im.flag_value ? "true" : "false") << "\n";
      }
    }
  }
}

std::vector<std::string> tokens(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (ss >> tok) {
    if (tok[0] == '#') break;
    out.push_back(tok);
  }
  return out;
}

}  // namespace

std::string serialize_network(const TaskNetwork& net) {
  std::ostringstream os;
  os << "tasknet " << net.name << "\n";
  for (const auto& [k, v] : net.metadata)
    os << "meta " << k << " " << fmt_num(v) << "\n";
  for (const auto& a : net.agents)
    os << "agent " << a.id << " "
       << (a.role == AgentRole::Rover ? "rover" : "base") << "\n";
  for (const auto& v : net.variables) {
    os << "var " << v.ref.owner << " " << v.ref.name << " ";
    if (v.kind == VarKind::Continuous) {
      os << "cont " << opt_field(v.units) << " " << fmt_num(v.lower) << " "
         << fmt_num(v.upper) << "\n";
    } else {
      os << "flag " << opt_field(v.units) << " " << fmt_bools(v.allowed)
         << "\n";
    }
  }
  for (const auto& t : net.tasks) {
    emit_task(os, t, "");
    for (const auto& sub : t.decomposition) emit_task(os, sub, t.id);
  }
  return os.str();
}

TaskNetwork parse_network(const std::string& text) {
  TaskNetwork net;
  std::map<std::string, TaskTemplate*> by_id;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;

  auto need = [&](const std::vector<std::string>& f, std::size_t n) {
    if (f.size() < n)
      throw ParseError(lineno, "expected " + std::to_string(n) + " fields, got " +
                                   std::to_string(f.size()));
  };
  auto find_task = [&](const std::string& id) -> TaskTemplate& {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ParseError(lineno, "unknown task '" + id + "'");
    return *it->second;
  };

  while (std::getline(in, line)) {
    ++lineno;
    auto f = tokens(line);
    if (f.empty()) continue;
    const std::string& rec = f[0];
    if (rec == "tasknet") {
      need(f, 2);
      net.name = f[1];
    } else if (rec == "meta") {
      need(f, 3);
      net.metadata[f[1]] = parse_num(f[2], lineno);
    } else if (rec == "agent") {
      need(f, 3);
      AgentRole role;
      if (f[2] == "rover")
        role = AgentRole::Rover;
      else if (f[2] == "base")
        role = AgentRole::BaseStation;
      else
        throw ParseError(lineno, "bad agent role '" + f[2] + "'");
      net.agents.push_back({f[1], role});
    } else if (rec == "var") {
      need(f, 5);
      StateVariable v;
      v.ref = {f[1], f[2]};
      if (f[3] == "cont") {
        need(f, 7);
        v.kind = VarKind::Continuous;
        v.units = read_opt(f[4]);
        v.lower = parse_num(f[5], lineno);
        v.upper = parse_num(f[6], lineno);
      } else if (f[3] == "flag") {
        need(f, 6);
        v.kind = VarKind::Flag;
        v.units = read_opt(f[4]);
        v.allowed = parse_bools(f[5], lineno);
      } else {
        throw ParseError(lineno, "bad var kind '" + f[3] + "'");
      }
      net.variables.push_back(std::move(v));
    } else if (rec == "task") {
      need(f, 15);
      TaskTemplate t;
      t.id = f[1];
      t.executor = parse_executor(f[2]);
      t.priority = int(parse_num(f[3], lineno));
      t.preferred_start = parse_num(f[4], lineno);
      t.expected_duration = parse_num(f[5], lineno);
      auto mit = kModes.find(f[6]);
      if (mit == kModes.end()) throw ParseError(lineno, "bad mode '" + f[6] + "'");
      t.mode = mit->second;
      auto cit = kCategories.find(f[7]);
      if (cit == kCategories.end())
        throw ParseError(lineno, "bad category '" + f[7] + "'");
      t.category = cit->second;
      t.command = read_opt(f[8]);
      t.cleanup_command = read_opt(f[9]);
      t.detail_command = read_opt(f[10]);
      t.instance_count = int(parse_num(f[11], lineno));
      t.retry_budget = int(parse_num(f[12], lineno));
      if (f[13] != "-") {
        std::stringstream fs(f[13]);
        std::string flag;
        while (std::getline(fs, flag, ',')) {
          if (flag == "stoppable")
            t.stoppable = true;
          else if (flag == "pinned")
            t.pinned_to_parent = true;
          else if (flag == "clears-coord")
            t.clears_coordination = true;
          else if (flag.rfind("stop=", 0) == 0)
            t.stop_task = flag.substr(5);
          else
            throw ParseError(lineno, "bad task flag '" + flag + "'");
        }
      }
      std::string parent = read_opt(f[14]);
      if (parent.empty()) {
        net.tasks.push_back(std::move(t));
        by_id[net.tasks.back().id] = &net.tasks.back();
      } else {
        TaskTemplate& p = find_task(parent);
        p.decomposition.push_back(std::move(t));
        by_id[p.decomposition.back().id] = &p.decomposition.back();
      }
      // Appending may reallocate the task vector; refresh the index.
      by_id.clear();
      for (auto& task : net.tasks) {
        by_id[task.id] = &task;
        for (auto& sub : task.decomposition) by_id[sub.id] = &sub;
      }
    } else if (rec == "constraint") {
      need(f, 8);
      TaskTemplate& t = find_task(f[1]);
      Constraint c;
      if (f[2] == "pre")
        c.scope = ConstraintScope::PreExecution;
      else if (f[2] == "maint")
        c.scope = ConstraintScope::Maintenance;
      else
        throw ParseError(lineno, "bad constraint scope '" + f[2] + "'");
      if (f[3] == "local")
        c.locus = ConstraintLocus::Local;
      else if (f[3] == "multi")
        c.locus = ConstraintLocus::MultiAgent;
      else
        throw ParseError(lineno, "bad constraint locus '" + f[3] + "'");
      if (f[4] == "num") {
        need(f, 9);
        c.variable = {f[5], f[6]};
        c.lower = parse_num(f[7], lineno);
        c.upper = parse_num(f[8], lineno);
      } else if (f[4] == "flag") {
        c.variable = {f[5], f[6]};
        c.allowed = parse_bools(f[7], lineno);
      } else {
        throw ParseError(lineno, "bad constraint form '" + f[4] + "'");
      }
      t.constraints.push_back(std::move(c));
    } else if (rec == "precedence") {
      need(f, 4);
      TaskTemplate& t = find_task(f[1]);
      Constraint c;
      c.scope = ConstraintScope::Precedence;
      c.predecessor = f[2];
      c.accept.clear();
      std::stringstream as(f[3]);
      std::string o;
      while (std::getline(as, o, ',')) {
        auto oit = kOutcomes.find(o);
        if (oit == kOutcomes.end())
          throw ParseError(lineno, "bad outcome '" + o + "'");
        c.accept.insert(oit->second);
      }
      t.constraints.push_back(std::move(c));
    } else if (rec == "impact") {
      need(f, 7);
      TaskTemplate& t = find_task(f[1]);
      Impact im;
      im.variable = {f[2], f[3]};
      if (f[4] == "rate")
        im.model = ImpactModel::LinearRate;
      else if (f[4] == "start")
        im.model = ImpactModel::DeltaAtStart;
      else if (f[4] == "end")
        im.model = ImpactModel::DeltaAtEnd;
      else
        throw ParseError(lineno, "bad impact timing '" + f[4] + "'");
      if (f[5] == "num") {
        im.amount = parse_num(f[6], lineno);
      } else if (f[5] == "flag") {
        im.flag_value = f[6] == "true";
      } else {
        throw ParseError(lineno, "bad impact form '" + f[5] + "'");
      }
      t.impacts.push_back(std::move(im));
    } else {
      throw ParseError(lineno, "unknown record '" + rec + "'");
    }
  }
  return net;
}

}  // namespace psesim::tasknet
