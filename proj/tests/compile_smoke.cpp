#include "finnlite/bundle.hpp"
#include "finnlite/executor.hpp"
#include "finnlite/folding.hpp"
#include "finnlite/graph_json.hpp"
#include "finnlite/model_zoo.hpp"
#include "finnlite/streamline.hpp"

int main() {
  auto g = finnlite::build_cnv(1, 42);
  auto r = finnlite::streamline_all(g, 100);
  return r.graph.nodes.empty() ? 1 : 0;
}
