#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "forge/proc.hpp"
#include "forge/syntax.hpp"

using namespace forge;

namespace {

using Span = std::tuple<std::string, size_t, size_t>; // level, begin, end

std::set<Span> spans_of(const SyntaxTree& tree) {
    std::set<Span> out;
    for (const auto& n : tree.nodes) {
        out.insert({std::string(node_level_name(n.level)), n.begin, n.end});
    }
    return out;
}

std::set<Span> py_oracle_spans(const std::string& source) {
    auto res = run_command({"python3", FORGE_SOURCE_DIR "/tests/oracle_py_spans.py"}, source);
    REQUIRE(res.ok());
    std::set<Span> out;
    std::istringstream in(res.out);
    std::string level;
    size_t b, e;
    while (in >> level >> b >> e) out.insert({level, b, e});
    return out;
}

bool has_node(const SyntaxTree& tree, std::string_view kind, size_t begin, size_t end) {
    return std::any_of(tree.nodes.begin(), tree.nodes.end(), [&](const SyntaxNode& n) {
        return n.kind == kind && n.begin == begin && n.end == end;
    });
}

} // namespace

TEST_CASE("python: functions, statements and expressions", "[syntax][python]") {
    std::string src =
        "def add(a, b):\n"
        "    total = a + b\n"
        "    return total\n";
    auto tree = parse_source(Language::python, src);
    REQUIRE(tree.valid);
    CHECK(has_node(tree, "function_definition", 0, src.size() - 1));
    CHECK(has_node(tree, "simple_statement", 19, 32)); // total = a + b
    CHECK(has_node(tree, "assignment_rhs", 27, 32));   // a + b
    CHECK(has_node(tree, "simple_statement", 37, 49)); // return total
    CHECK(has_node(tree, "return_expression", 44, 49));
}

TEST_CASE("python: if/elif/else folds into one statement node", "[syntax][python]") {
    std::string src =
        "if x:\n"
        "    a = 1\n"
        "elif y:\n"
        "    b = 2\n"
        "else:\n"
        "    c = 3\n";
    auto tree = parse_source(Language::python, src);
    REQUIRE(tree.valid);
    CHECK(has_node(tree, "if_statement", 0, src.size() - 1));
    auto stmts = tree.nodes_at(NodeLevel::statement);
    // one if + three simple assignments
    CHECK(stmts.size() == 4);
}

TEST_CASE("python: decorators excluded from function span", "[syntax][python]") {
    std::string src =
        "@wrap\n"
        "def f():\n"
        "    pass\n";
    auto tree = parse_source(Language::python, src);
    REQUIRE(tree.valid);
    auto funcs = tree.nodes_at(NodeLevel::function);
    REQUIRE(funcs.size() == 1);
    CHECK(funcs[0].begin == 6);
    CHECK(funcs[0].end == src.size() - 1);
}

TEST_CASE("python: class bodies, nesting, bare calls", "[syntax][python]") {
    std::string src =
        "class C:\n"
        "    def m(self):\n"
        "        log.info(self)\n"
        "\n"
        "run(C())\n";
    auto tree = parse_source(Language::python, src);
    REQUIRE(tree.valid);
    CHECK(has_node(tree, "class_definition", 0, 48));
    CHECK(has_node(tree, "function_definition", 13, 48));
    CHECK(has_node(tree, "call_expression", 34, 48)); // log.info(self)
    CHECK(has_node(tree, "call_expression", 50, 58)); // run(C())
}

TEST_CASE("python: triple-quoted strings and implicit continuation", "[syntax][python]") {
    std::string src =
        "doc = \"\"\"two\nlines # not a comment\"\"\"\n"
        "vals = [1,\n"
        "        2]\n";
    auto tree = parse_source(Language::python, src);
    REQUIRE(tree.valid);
    auto stmts = tree.nodes_at(NodeLevel::statement);
    REQUIRE(stmts.size() == 2);
    CHECK(stmts[0].begin == 0);
    CHECK(stmts[0].end == 37);
    CHECK(stmts[1].end == src.size() - 1);
}

TEST_CASE("python: invalid structure is reported", "[syntax][python]") {
    CHECK_FALSE(parse_source(Language::python, "x = (1\n").valid);         // open bracket
    CHECK_FALSE(parse_source(Language::python, "s = 'abc\n").valid);       // open string
    CHECK_FALSE(parse_source(Language::python, "if x\n    y = 1\n").valid); // no colon
    CHECK_FALSE(parse_source(Language::python, "if x:\ny = 1\n").valid);   // empty suite
    CHECK_FALSE(parse_source(Language::python, "  x = 1\n").valid);        // stray indent
    CHECK_FALSE(parse_source(Language::python,
                             "def f():\n        a = 1\n    b = 2\n").valid); // bad dedent
    CHECK(parse_source(Language::python, "x = []\ny = x[1:]\n").valid);
}

TEST_CASE("python spans agree with the CPython ast reference", "[syntax][python][oracle]") {
    const std::vector<std::string> fixtures = {
        "def add(a, b):\n"
        "    total = a + b\n"
        "    return total\n",

        "class Store:\n"
        "    def __init__(self, size):\n"
        "        self.size = size\n"
        "        self.items = []\n"
        "\n"
        "    def push(self, item):\n"
        "        self.items.append(item)\n"
        "        if len(self.items) > self.size:\n"
        "            self.items.pop(0)\n"
        "        return len(self.items)\n",

        "import os\n"
        "\n"
        "CONST = 3\n"
        "\n"
        "def walk(root):\n"
        "    out = []\n"
        "    for name in os.listdir(root):\n"
        "        if name.startswith('.'):\n"
        "            continue\n"
        "        elif name.endswith('.py'):\n"
        "            out.append(name)\n"
        "        else:\n"
        "            pass\n"
        "    while len(out) > 10:\n"
        "        out.pop()\n"
        "    return out\n",

        "async def fetch(url):\n"
        "    async with session.get(url) as resp:\n"
        "        body = await resp.read()\n"
        "    return body\n",

        "try:\n"
        "    value = int(text)\n"
        "except ValueError:\n"
        "    value = 0\n"
        "finally:\n"
        "    cleanup()\n",

        "x = 1\n"
        "x += 2\n"
        "y: int = x\n"
        "name = 'caf\xc3\xa9'\n"
        "print(x, y)\n",
    };
    for (const auto& src : fixtures) {
        auto tree = parse_source(Language::python, src);
        REQUIRE(tree.valid);
        auto mine = spans_of(tree);
        auto ref = py_oracle_spans(src);
        INFO("fixture:\n" << src);
        CHECK(mine == ref);
    }
}

TEST_CASE("java: methods, control flow, expressions", "[syntax][java]") {
    std::string src =
        "public class Calc {\n"
        "    private int total = 0;\n"
        "\n"
        "    public int add(int x) throws IllegalStateException {\n"
        "        if (x < 0) {\n"
        "            throw new IllegalStateException(\"neg\");\n"
        "        }\n"
        "        total += x;\n"
        "        return total;\n"
        "    }\n"
        "}\n";
    auto tree = parse_source(Language::java, src);
    REQUIRE(tree.valid);
    auto funcs = tree.nodes_at(NodeLevel::function);
    REQUIRE(funcs.size() == 1);
    CHECK(src.substr(funcs[0].begin, 6) == "public");
    CHECK(src[funcs[0].end - 1] == '}');
    auto stmts = tree.nodes_at(NodeLevel::statement);
    // if_statement, throw (simple), total += x, return
    CHECK(stmts.size() == 4);
    // condition expression "x < 0"
    size_t cond = src.find("x < 0");
    CHECK(has_node(tree, "condition_expression", cond, cond + 5));
    size_t rhs = src.find("x;", src.find("total +=")) ;
    CHECK(has_node(tree, "assignment_rhs", rhs, rhs + 1));
    CHECK(has_node(tree, "new_expression", src.find("new IllegalStateException"),
                   src.find("\"neg\")") + 6));
}

TEST_CASE("java: loops, try/catch and calls", "[syntax][java]") {
    std::string src =
        "class W {\n"
        "    void run(java.util.List<String> xs) {\n"
        "        for (int i = 0; i < xs.size(); i++) {\n"
        "            System.out.println(xs.get(i));\n"
        "        }\n"
        "        try {\n"
        "            work();\n"
        "        } catch (Exception e) {\n"
        "            log(e);\n"
        "        } finally {\n"
        "            close();\n"
        "        }\n"
        "        while (busy()) {\n"
        "            wait(10);\n"
        "        }\n"
        "        do { spin(); } while (hot());\n"
        "    }\n"
        "}\n";
    auto tree = parse_source(Language::java, src);
    REQUIRE(tree.valid);
    CHECK(has_node(tree, "for_statement", src.find("for ("), src.find("}\n        try") + 1));
    size_t try_pos = src.find("try {");
    size_t finally_close = src.find("close();\n        }") + 17 + 1;
    CHECK(has_node(tree, "try_statement", try_pos, finally_close));
    size_t call = src.find("System.out.println");
    CHECK(has_node(tree, "call_expression", call, src.find("(i));") + 4));
    CHECK(has_node(tree, "call_expression", src.find("xs.get(i)"), src.find("xs.get(i)") + 9));
    size_t dw = src.find("do {");
    CHECK(has_node(tree, "do_statement", dw, src.find("while (hot());") + 14));
    auto funcs = tree.nodes_at(NodeLevel::function);
    REQUIRE(funcs.size() == 1);
}

TEST_CASE("typescript: functions, arrows, templates", "[syntax][ts]") {
    std::string src =
        "export function greet(name: string): string {\n"
        "    const msg = `hello ${name.toUpperCase()} !`;\n"
        "    return msg;\n"
        "}\n"
        "\n"
        "const twice = (x: number) => {\n"
        "    return x * 2;\n"
        "};\n";
    auto tree = parse_source(Language::typescript, src);
    REQUIRE(tree.valid);
    auto funcs = tree.nodes_at(NodeLevel::function);
    REQUIRE(funcs.size() == 2);
    CHECK(funcs[0].kind == "function_declaration");
    CHECK(funcs[1].kind == "arrow_function");
    CHECK(src.substr(funcs[1].begin, 11) == "(x: number)");
    CHECK(has_node(tree, "return_statement", src.find("return msg;"), src.find("return msg;") + 11));
    size_t rhs = src.find("`hello");
    CHECK(has_node(tree, "assignment_rhs", rhs, src.find("!`;") + 2));
}

TEST_CASE("typescript: class methods and constructor", "[syntax][ts]") {
    std::string src =
        "class Point {\n"
        "    constructor(private x: number, private y: number) {\n"
        "        this.x = x;\n"
        "    }\n"
        "    norm(): number {\n"
        "        return Math.sqrt(this.x * this.x);\n"
        "    }\n"
        "}\n";
    auto tree = parse_source(Language::typescript, src);
    REQUIRE(tree.valid);
    auto funcs = tree.nodes_at(NodeLevel::function);
    REQUIRE(funcs.size() == 2);
    CHECK(has_node(tree, "call_expression", src.find("Math.sqrt"), src.find("this.x);") + 7));
}

TEST_CASE("csharp: strings, foreach, using", "[syntax][cs]") {
    std::string src =
        "namespace App {\n"
        "    class Runner {\n"
        "        public void Go(string[] args) {\n"
        "            var path = @\"C:\\tmp\\\"\"quoted\"\"\";\n"
        "            foreach (var a in args) {\n"
        "                Console.WriteLine($\"arg {a}\");\n"
        "            }\n"
        "            using (var f = Open(path)) {\n"
        "                f.Read();\n"
        "            }\n"
        "            switch (args.Length) {\n"
        "                case 0:\n"
        "                    return;\n"
        "                default:\n"
        "                    break;\n"
        "            }\n"
        "        }\n"
        "    }\n"
        "}\n";
    auto tree = parse_source(Language::csharp, src);
    REQUIRE(tree.valid);
    auto funcs = tree.nodes_at(NodeLevel::function);
    REQUIRE(funcs.size() == 1);
    CHECK(has_node(tree, "foreach_statement", src.find("foreach"),
                   src.find("}\n            using") + 1));
    size_t using_pos = src.find("using (");
    CHECK(has_node(tree, "using_statement", using_pos, src.find("}\n            switch") + 1));
    size_t sw = src.find("switch (");
    CHECK(has_node(tree, "switch_statement", sw, src.rfind("}\n        }\n    }") + 1));
    CHECK(has_node(tree, "call_expression", src.find("f.Read()"), src.find("f.Read()") + 8));
}

TEST_CASE("c-family: malformed inputs are invalid", "[syntax]") {
    CHECK_FALSE(parse_source(Language::java, "class A { void f() { }").valid);  // missing }
    CHECK_FALSE(parse_source(Language::java, "class A { } }").valid);           // extra }
    CHECK_FALSE(parse_source(Language::java, "String s = \"abc;\n").valid);     // open string
    CHECK_FALSE(parse_source(Language::java, "/* never closed\nclass A {}").valid);
    CHECK_FALSE(parse_source(Language::typescript, "const s = `abc${1\n").valid);
    CHECK_FALSE(parse_source(Language::java, "void f(int a] {}").valid);        // mismatched
    CHECK(parse_source(Language::java, "class A { /* ok */ }\n").valid);
    CHECK(parse_source(Language::csharp, "class A { string s = \"x // not comment\"; }\n").valid);
}

TEST_CASE("validate_syntax produces level counts", "[syntax]") {
    SourceFile f = make_source_file("r", "m.py",
                                    "def f():\n"
                                    "    x = 1\n"
                                    "    return x\n");
    auto report = validate_syntax(f);
    CHECK(report.syntactically_valid);
    CHECK(report.parse_error_count == 0);
    CHECK(report.node_counts.at(NodeLevel::function) == 1);
    CHECK(report.node_counts.at(NodeLevel::statement) == 2);
    CHECK(report.node_counts.at(NodeLevel::expression) == 2);
    CHECK_THROWS_AS(validate_syntax(make_source_file("r", "x.unknownext", "data")), Error);
}
