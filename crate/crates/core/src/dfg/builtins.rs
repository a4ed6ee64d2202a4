//! Flow summaries for language builtins. Calls to these are not unresolved
//! externals: their results are known to derive from their inputs only.

/// How a modeled call's result relates to its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    /// Result keeps the inputs' field structure (copies, sorting, picking an
    /// element, numeric conversion).
    Carry,
    /// Result is derived from the whole inputs (rendering, hashing, counting).
    Reset,
}

const CARRY_FUNCTIONS: &[&str] = &[
    "abs",
    "dict",
    "enumerate",
    "filter",
    "float",
    "frozenset",
    "int",
    "iter",
    "list",
    "max",
    "min",
    "next",
    "reversed",
    "round",
    "set",
    "sorted",
    "sum",
    "tuple",
    "zip",
];

const RESET_FUNCTIONS: &[&str] = &[
    "all",
    "any",
    "ascii",
    "bin",
    "bool",
    "chr",
    "divmod",
    "format",
    "hash",
    "hex",
    "isinstance",
    "len",
    "oct",
    "ord",
    "pow",
    "print",
    "range",
    "repr",
    "str",
    "type",
];

const CARRY_METHODS: &[&str] = &["copy", "items", "keys", "pop", "values"];

const RESET_METHODS: &[&str] = &[
    "capitalize",
    "casefold",
    "center",
    "count",
    "encode",
    "endswith",
    "find",
    "format",
    "index",
    "isalnum",
    "isalpha",
    "isdigit",
    "islower",
    "isnumeric",
    "isspace",
    "isupper",
    "join",
    "ljust",
    "lower",
    "lstrip",
    "replace",
    "rjust",
    "rsplit",
    "rstrip",
    "split",
    "splitlines",
    "startswith",
    "strip",
    "swapcase",
    "title",
    "upper",
    "zfill",
];

/// Container mutators whose effect on the receiver is modeled directly.
pub const MUTATOR_METHODS: &[&str] = &["append", "add", "extend", "insert", "setdefault", "update"];

/// Mutators that only remove or reorder: nothing new enters the receiver.
const NON_ADDING_METHODS: &[&str] = &["clear", "discard", "pop", "popitem", "remove", "reverse", "sort"];

pub fn function_flow(name: &str) -> Option<Flow> {
    if CARRY_FUNCTIONS.contains(&name) {
        Some(Flow::Carry)
    } else if RESET_FUNCTIONS.contains(&name) {
        Some(Flow::Reset)
    } else {
        None
    }
}

pub fn method_flow(name: &str) -> Option<Flow> {
    if CARRY_METHODS.contains(&name) {
        Some(Flow::Carry)
    } else if RESET_METHODS.contains(&name) {
        Some(Flow::Reset)
    } else {
        None
    }
}

/// Keyword arguments that only steer which elements a call returns or in
/// what order; their values never reach the result.
pub fn is_selector_keyword(function: &str, keyword: &str) -> bool {
    matches!(
        (function, keyword),
        ("min" | "max" | "sorted" | "sort", "key") | ("sorted" | "sort", "reverse")
    )
}

pub fn is_builtin_function(name: &str) -> bool {
    function_flow(name).is_some() || matches!(name, "open" | "getattr" | "hasattr" | "id")
}

/// Whether a method call with this name leaves no new data in its receiver.
pub fn receiver_unchanged(name: &str) -> bool {
    NON_ADDING_METHODS.contains(&name) || method_flow(name).is_some()
}
