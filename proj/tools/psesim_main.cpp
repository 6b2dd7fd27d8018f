// Command-line front end; subcommands grow with the library.
#include <CLI11.hpp>

#include <cstdio>

#include "psesim/tasknet.hpp"

int main(int argc, char** argv) {
  CLI::App app{"multi-agent planning/scheduling/execution simulator"};
  app.require_subcommand(0, 1);

  auto* validate = app.add_subcommand("validate", "validate a task network file");
  std::string net_path;
  validate->add_option("file", net_path, "network file")->required();

  CLI11_PARSE(app, argc, argv);

  if (validate->parsed()) {
    FILE* f = std::fopen(net_path.c_str(), "rb");
    if (!f) {
      std::fprintf(stderr, "cannot open %s\n", net_path.c_str());
      return 2;
    }
    std::string text;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) text.append(buf, n);
    std::fclose(f);
    try {
      auto net = psesim::tasknet::parse_network(text);
      auto report = psesim::tasknet::validate_network(net);
      for (const auto& finding : report.findings)
        std::fprintf(stderr, "%s: %s\n", finding.kind.c_str(),
                     finding.detail.c_str());
      std::printf("%s: %zu tasks, %s\n", net.name.c_str(), net.tasks.size(),
                  report.ok() ? "ok" : "invalid");
      return report.ok() ? 0 : 1;
    } catch (const psesim::tasknet::ParseError& e) {
      std::fprintf(stderr, "parse error: %s\n", e.what());
      return 2;
    }
  }
  return 0;
}
