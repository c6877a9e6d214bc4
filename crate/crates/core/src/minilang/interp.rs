use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::RunError;

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;
pub const DEFAULT_MAX_CALL_DEPTH: usize = 1_000;
const INTERPRETER_STACK: usize = 256 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Array(Rc<Vec<i64>>),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Bool(_) => "bool",
            Value::Array(_) => "array",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Pass,
    AssertFail,
    RuntimeError,
    BudgetExceeded,
}

impl TestStatus {
    /// Every non-pass outcome kills a mutant.
    pub fn is_failure(self) -> bool {
        self != TestStatus::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestOutcome {
    pub status: TestStatus,
    pub steps_used: u64,
    pub covered_lines: BTreeSet<u32>,
    /// Equals `steps_used`; the per-test runtime proxy.
    pub wall_model_cost: u64,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunLimits {
    pub budget: u64,
    pub max_call_depth: usize,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits { budget: DEFAULT_STEP_BUDGET, max_call_depth: DEFAULT_MAX_CALL_DEPTH }
    }
}

impl RunLimits {
    pub fn with_budget(budget: u64) -> Self {
        RunLimits { budget, ..Default::default() }
    }
}

/// Test names in declaration order.
pub fn list_tests(program: &Program) -> Vec<String> {
    program.tests.iter().map(|t| t.name.clone()).collect()
}

/// Runs one test with the default call-depth limit.
pub fn run_test(program: &Program, test_name: &str, budget: u64) -> Result<TestOutcome, RunError> {
    run_test_with(program, test_name, RunLimits::with_budget(budget))
}

pub fn run_test_with(program: &Program, test_name: &str, limits: RunLimits) -> Result<TestOutcome, RunError> {
    if limits.budget == 0 {
        return Err(RunError::ZeroBudget);
    }
    let test = program
        .test(test_name)
        .ok_or_else(|| RunError::UnknownTest(test_name.to_string()))?;
    // Deep MiniLang recursion maps onto Rust recursion; give it a roomy stack.
    let outcome = std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(INTERPRETER_STACK)
            .spawn_scoped(s, || execute(program, test, limits))
            .expect("spawn interpreter thread")
            .join()
            .expect("interpreter thread panicked")
    });
    Ok(outcome)
}

fn execute(program: &Program, test: &TestDef, limits: RunLimits) -> TestOutcome {
    let mut m = Machine { program, limits, steps: 0, depth: 0, covered: BTreeSet::new() };
    let mut frame = HashMap::new();
    m.cover(test.line);
    let result = m.exec_block(&test.body, &mut frame);
    let (status, message) = match result {
        Ok(_) => (TestStatus::Pass, None),
        Err(Halt::AssertFail(msg)) => (TestStatus::AssertFail, Some(msg)),
        Err(Halt::Runtime(msg)) => (TestStatus::RuntimeError, Some(msg)),
        Err(Halt::Budget) => (TestStatus::BudgetExceeded, None),
    };
    TestOutcome {
        status,
        steps_used: m.steps,
        covered_lines: m.covered,
        wall_model_cost: m.steps,
        message,
    }
}

enum Halt {
    AssertFail(String),
    Runtime(String),
    Budget,
}

enum Flow {
    Normal,
    Return(Value),
}

type Frame = HashMap<String, Value>;

struct Machine<'p> {
    program: &'p Program,
    limits: RunLimits,
    steps: u64,
    depth: usize,
    covered: BTreeSet<u32>,
}

fn runtime<T>(msg: impl Into<String>) -> Result<T, Halt> {
    Err(Halt::Runtime(msg.into()))
}

impl<'p> Machine<'p> {
    fn tick(&mut self) -> Result<(), Halt> {
        if self.steps >= self.limits.budget {
            return Err(Halt::Budget);
        }
        self.steps += 1;
        Ok(())
    }

    fn cover(&mut self, line: u32) {
        self.covered.insert(line);
    }

    fn exec_block(&mut self, stmts: &'p [Stmt], frame: &mut Frame) -> Result<Flow, Halt> {
        for s in stmts {
            if let Flow::Return(v) = self.exec(s, frame)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn exec(&mut self, stmt: &'p Stmt, frame: &mut Frame) -> Result<Flow, Halt> {
        self.tick()?;
        self.cover(stmt.line);
        match &stmt.kind {
            StmtKind::Let { name, value } => {
                let v = self.eval(value, frame)?;
                frame.insert(name.clone(), v);
            }
            StmtKind::Assign { name, value } => {
                let v = self.eval(value, frame)?;
                match frame.get_mut(name) {
                    Some(slot) => *slot = v,
                    None => return runtime(format!("assignment to undeclared variable `{name}`")),
                }
            }
            StmtKind::AssignIndex { name, index, value } => {
                let i = self.eval_int(index, frame)?;
                let v = self.eval_int(value, frame)?;
                match frame.get_mut(name) {
                    Some(Value::Array(items)) => {
                        let len = items.len();
                        let slot = usize::try_from(i)
                            .ok()
                            .filter(|&i| i < len)
                            .ok_or_else(|| Halt::Runtime(format!("index {i} out of bounds for length {len}")))?;
                        Rc::make_mut(items)[slot] = v;
                    }
                    Some(other) => return runtime(format!("cannot index into {}", other.type_name())),
                    None => return runtime(format!("assignment to undeclared variable `{name}`")),
                }
            }
            StmtKind::If { cond, then_block, else_block } => {
                if self.eval_bool(cond, frame)? {
                    return self.exec_block(then_block, frame);
                } else if let Some(e) = else_block {
                    return self.exec_block(e, frame);
                }
            }
            StmtKind::While { cond, body } => {
                while self.eval_bool(cond, frame)? {
                    if let Flow::Return(v) = self.exec_block(body, frame)? {
                        return Ok(Flow::Return(v));
                    }
                    self.tick()?;
                }
            }
            StmtKind::Return(value) => {
                let v = match value {
                    Some(e) => self.eval(e, frame)?,
                    None => Value::Int(0),
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::Assert(e) => {
                if !self.eval_bool(e, frame)? {
                    let src = self.program.slice(e.span);
                    return Err(Halt::AssertFail(format!("assertion `{src}` failed")));
                }
            }
            StmtKind::AssertEq(a, b) => {
                let x = self.eval(a, frame)?;
                let y = self.eval(b, frame)?;
                if x != y {
                    return Err(Halt::AssertFail(format!("assert_eq failed: {x:?} != {y:?}")));
                }
            }
            StmtKind::Expr(e) => {
                self.eval(e, frame)?;
            }
        }
        Ok(Flow::Normal)
    }

    fn eval_bool(&mut self, e: &'p Expr, frame: &mut Frame) -> Result<bool, Halt> {
        match self.eval(e, frame)? {
            Value::Bool(b) => Ok(b),
            other => runtime(format!("expected bool, found {}", other.type_name())),
        }
    }

    fn eval_int(&mut self, e: &'p Expr, frame: &mut Frame) -> Result<i64, Halt> {
        match self.eval(e, frame)? {
            Value::Int(v) => Ok(v),
            other => runtime(format!("expected int, found {}", other.type_name())),
        }
    }

    fn eval(&mut self, e: &'p Expr, frame: &mut Frame) -> Result<Value, Halt> {
        self.tick()?;
        self.cover(e.line);
        match &e.kind {
            ExprKind::Int(v) => Ok(Value::Int(*v)),
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::Var(name) => match frame.get(name) {
                Some(v) => Ok(v.clone()),
                None => runtime(format!("undefined variable `{name}`")),
            },
            ExprKind::Array(items) => {
                let mut out = Vec::with_capacity(items.len());
                for it in items {
                    out.push(self.eval_int(it, frame)?);
                }
                Ok(Value::Array(Rc::new(out)))
            }
            ExprKind::Index { base, index } => {
                let b = self.eval(base, frame)?;
                let i = self.eval_int(index, frame)?;
                match b {
                    Value::Array(items) => usize::try_from(i)
                        .ok()
                        .and_then(|i| items.get(i).copied())
                        .map(Value::Int)
                        .ok_or_else(|| Halt::Runtime(format!("index {i} out of bounds for length {}", items.len()))),
                    other => runtime(format!("cannot index into {}", other.type_name())),
                }
            }
            ExprKind::Call { name, args } => self.call(name, args, frame),
            ExprKind::Unary { op, operand } => match (op, self.eval(operand, frame)?) {
                (UnOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                (UnOp::Neg, Value::Int(v)) => Ok(Value::Int(v.wrapping_neg())),
                (_, v) => runtime(format!("bad operand type {} for unary operator", v.type_name())),
            },
            ExprKind::Binary { op, op_line, lhs, rhs, .. } => {
                self.cover(*op_line);
                self.binary(*op, lhs, rhs, frame)
            }
        }
    }

    fn binary(&mut self, op: BinOp, lhs: &'p Expr, rhs: &'p Expr, frame: &mut Frame) -> Result<Value, Halt> {
        if op.is_logical() {
            let l = self.eval_bool(lhs, frame)?;
            return match (op, l) {
                (BinOp::And, false) => Ok(Value::Bool(false)),
                (BinOp::Or, true) => Ok(Value::Bool(true)),
                _ => Ok(Value::Bool(self.eval_bool(rhs, frame)?)),
            };
        }
        let l = self.eval(lhs, frame)?;
        let r = self.eval(rhs, frame)?;
        if matches!(op, BinOp::Eq | BinOp::Ne) {
            if std::mem::discriminant(&l) != std::mem::discriminant(&r) {
                return runtime(format!("cannot compare {} with {}", l.type_name(), r.type_name()));
            }
            return Ok(Value::Bool((l == r) == (op == BinOp::Eq)));
        }
        let (Value::Int(a), Value::Int(b)) = (&l, &r) else {
            return runtime(format!(
                "operator `{}` needs ints, found {} and {}",
                op.symbol(),
                l.type_name(),
                r.type_name()
            ));
        };
        let (a, b) = (*a, *b);
        Ok(match op {
            BinOp::Add => Value::Int(a.wrapping_add(b)),
            BinOp::Sub => Value::Int(a.wrapping_sub(b)),
            BinOp::Mul => Value::Int(a.wrapping_mul(b)),
            BinOp::Div if b == 0 => return runtime("division by zero"),
            BinOp::Div => Value::Int(a.wrapping_div(b)),
            BinOp::Rem if b == 0 => return runtime("remainder by zero"),
            BinOp::Rem => Value::Int(a.wrapping_rem(b)),
            BinOp::Lt => Value::Bool(a < b),
            BinOp::Le => Value::Bool(a <= b),
            BinOp::Gt => Value::Bool(a > b),
            BinOp::Ge => Value::Bool(a >= b),
            BinOp::Eq | BinOp::Ne | BinOp::And | BinOp::Or => unreachable!("handled above"),
        })
    }

    fn call(&mut self, name: &str, args: &'p [Expr], frame: &mut Frame) -> Result<Value, Halt> {
        let mut values = Vec::with_capacity(args.len());
        for a in args {
            values.push(self.eval(a, frame)?);
        }
        if name == "len" && self.program.function(name).is_none() {
            return match values.as_slice() {
                [Value::Array(items)] => Ok(Value::Int(items.len() as i64)),
                [other] => runtime(format!("len() of {}", other.type_name())),
                _ => runtime("len() takes one argument"),
            };
        }
        let Some(f) = self.program.function(name) else {
            return runtime(format!("call to undeclared function `{name}`"));
        };
        if f.params.len() != values.len() {
            return runtime(format!("`{name}` expects {} argument(s)", f.params.len()));
        }
        if self.depth >= self.limits.max_call_depth {
            return runtime("call depth limit exceeded");
        }
        self.cover(f.line);
        let mut callee: Frame = f.params.iter().cloned().zip(values).collect();
        self.depth += 1;
        let flow = self.exec_block(&f.body, &mut callee);
        self.depth -= 1;
        match flow? {
            Flow::Return(v) => Ok(v),
            Flow::Normal => Ok(Value::Int(0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parse;

    fn outcome(src: &str, test: &str, budget: u64) -> TestOutcome {
        run_test(&parse(src).unwrap(), test, budget).unwrap()
    }

    #[test]
    fn pass_fail_and_budget() {
        assert_eq!(outcome("test t{assert_eq(1+1, 2);}", "t", 100).status, TestStatus::Pass);
        assert_eq!(outcome("test t{assert(false);}", "t", 100).status, TestStatus::AssertFail);
        let o = outcome("test t{while(true){} assert(true);}", "t", 10_000);
        assert_eq!(o.status, TestStatus::BudgetExceeded);
        assert_eq!(o.steps_used, 10_000);
    }

    #[test]
    fn runtime_errors() {
        for body in ["assert_eq(1/0, 0);", "assert_eq(5%0, 0);", "assert_eq([1,2][2], 0);", "assert(1);", "let x = 0; y = 1; assert(true);"] {
            let src = format!("test t{{{body}}}");
            assert_eq!(outcome(&src, "t", 1000).status, TestStatus::RuntimeError, "{body}");
        }
    }

    #[test]
    fn wrapping_arithmetic() {
        let src = "test t{ assert_eq(9223372036854775807 + 1, -9223372036854775807 - 1); }";
        assert_eq!(outcome(src, "t", 100).status, TestStatus::Pass);
    }

    #[test]
    fn unbounded_recursion_is_a_runtime_error() {
        let src = "fn f(n){ return f(n+1); } test t{ assert_eq(f(0), 1); }";
        assert_eq!(outcome(src, "t", DEFAULT_STEP_BUDGET).status, TestStatus::RuntimeError);
    }

    #[test]
    fn short_circuit_skips_callee() {
        let src = "fn crash(){\n return 1/0 == 0;\n}\ntest t{\n assert(!(false && crash()));\n assert(true || crash());\n}";
        let o = outcome(src, "t", 1000);
        assert_eq!(o.status, TestStatus::Pass);
        assert!(!o.covered_lines.contains(&1) && !o.covered_lines.contains(&2));
    }

    #[test]
    fn arrays_have_value_semantics() {
        let src = "fn bump(xs){ xs[0] = xs[0] + 1; return xs[0]; }\ntest t{ let a = [1,2,3]; assert_eq(bump(a), 2); assert_eq(a[0], 1); assert_eq(len(a), 3); }";
        assert_eq!(outcome(src, "t", 1000).status, TestStatus::Pass);
    }

    #[test]
    fn unknown_test_and_zero_budget() {
        let p = parse("test t{assert(true);}").unwrap();
        assert!(matches!(run_test(&p, "nope", 10), Err(RunError::UnknownTest(_))));
        assert!(matches!(run_test(&p, "t", 0), Err(RunError::ZeroBudget)));
    }

    #[test]
    fn list_tests_in_order() {
        assert!(list_tests(&parse("fn f(){return 1;}").unwrap()).is_empty());
        let p = parse("test b{assert(true);} test a{assert(true);}").unwrap();
        assert_eq!(list_tests(&p), ["b", "a"]);
    }
}
