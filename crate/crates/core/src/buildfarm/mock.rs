//! In-process stand-in for the vendor toolchains.
//!
//! Sources are reduced to a small per-kernel operation model. Every
//! "compiler" renders that model into vendor-flavoured assembly, and every
//! "executable" reports a checksum of the model it was built from, so a
//! CUDA build and a faithful HIP build print identical output while a
//! semantically altered one does not.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::text::{sha256_hex, strip_c_comments};

/// Canned result for a stage whose primary input hashes to `hash`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockEntry {
    /// sha256 hex of the stage's primary input file.
    pub hash: String,
    pub stage: String,
    /// Restrict to one emulated flavour, e.g. `amd`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vendor: Option<String>,
    #[serde(default = "yes")]
    pub ok: bool,
    #[serde(default)]
    pub diagnostics: String,
    /// Replaces the command's stdout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stdout: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
    /// Slot name (e.g. `out`, `exe`) → file content written instead of the builtin output.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub artifacts: BTreeMap<String, String>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub entries: Vec<MockEntry>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<MockScript, super::BuildError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn lookup(&self, hash: &str, stage: &str, vendor: &str) -> Option<&MockEntry> {
        self.entries
            .iter()
            .find(|e| e.hash == hash && e.stage == stage && e.vendor.as_deref().is_none_or(|v| v == vendor))
    }

    /// Convenience: fail `stage` for input text `input`.
    pub fn fail(&mut self, input: &str, stage: &str, vendor: Option<&str>, diagnostics: &str) {
        self.entries.push(MockEntry {
            hash: sha256_hex(input),
            stage: stage.into(),
            vendor: vendor.map(str::to_string),
            ok: false,
            diagnostics: diagnostics.into(),
            stdout: None,
            exit_code: None,
            artifacts: BTreeMap::new(),
        });
    }
}

/// Result of one builtin tool invocation.
#[derive(Debug, Default)]
pub(crate) struct ToolResult {
    pub ok: bool,
    pub stdout: Vec<u8>,
    pub diagnostics: String,
    /// (path, content) pairs to write on success.
    pub files: Vec<(String, String)>,
}

impl ToolResult {
    fn fail(diag: impl Into<String>) -> ToolResult {
        ToolResult { ok: false, diagnostics: diag.into(), ..ToolResult::default() }
    }

    fn ok() -> ToolResult {
        ToolResult { ok: true, ..ToolResult::default() }
    }

    fn file(mut self, path: &str, content: String) -> ToolResult {
        self.files.push((path.to_string(), content));
        self
    }

    fn stdout(mut self, text: String) -> ToolResult {
        self.stdout = text.into_bytes();
        self
    }
}

// ---------------------------------------------------------------------------
// Source model

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Op {
    Load,
    Store,
    Add,
    Mul,
    Cmp,
    Branch,
    Sync,
    Atomic,
    Cvt,
}

impl Op {
    fn code(self) -> char {
        match self {
            Op::Load => 'L',
            Op::Store => 'S',
            Op::Add => 'A',
            Op::Mul => 'M',
            Op::Cmp => 'C',
            Op::Branch => 'B',
            Op::Sync => 'Y',
            Op::Atomic => 'T',
            Op::Cvt => 'V',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Kernel {
    pub name: String,
    pub ops: Vec<Op>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum HostOp {
    Call(String),
    Print { err: bool, label: usize },
    Launch(String),
    Arith,
    Cond,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct HostFn {
    pub name: String,
    pub ops: Vec<HostOp>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub(crate) struct Model {
    pub kernels: Vec<Kernel>,
    pub host: Vec<HostFn>,
    /// (is_stderr, C-escaped literal text)
    pub strings: Vec<(bool, String)>,
}

fn word_re(word: &str) -> Regex {
    Regex::new(&format!(r"\b{word}\b")).expect("static regex")
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static regex"))
}

/// Replaces string and char literal contents with spaces.
fn blank_literals(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut quote: Option<char> = None;
    let mut escape = false;
    for c in line.chars() {
        match quote {
            Some(q) => {
                if escape {
                    escape = false;
                    out.push(' ');
                } else if c == '\\' {
                    escape = true;
                    out.push(' ');
                } else if c == q {
                    quote = None;
                    out.push(c);
                } else {
                    out.push(' ');
                }
            }
            None => {
                if c == '"' || c == '\'' {
                    quote = Some(c);
                }
                out.push(c);
            }
        }
    }
    out
}

fn string_literals(line: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r#""((?:[^"\\]|\\.)*)""#).captures_iter(line).map(|c| c[1].to_string()).collect()
}

fn kernel_ops(line: &str, out: &mut Vec<Op>) {
    static WORDS: OnceLock<[Regex; 2]> = OnceLock::new();
    let [loop_re, if_re] = WORDS.get_or_init(|| [word_re("(for|while)"), word_re("if")]);
    if line.contains("__syncthreads") || line.contains("barrier(") {
        out.push(Op::Sync);
    }
    if line.contains("atomic") {
        out.push(Op::Atomic);
    }
    if loop_re.is_match(line) || if_re.is_match(line) {
        out.push(Op::Cmp);
        out.push(Op::Branch);
    }
    if line.contains("(float)") || line.contains("static_cast") || line.contains("__int2float") {
        out.push(Op::Cvt);
    }
    let bytes = line.as_bytes();
    let assign = (0..bytes.len()).find(|&i| {
        bytes[i] == b'='
            && bytes.get(i + 1) != Some(&b'=')
            && (i == 0 || !matches!(bytes[i - 1], b'=' | b'<' | b'>' | b'!'))
    });
    let (lhs, rhs) = match assign {
        Some(i) => (&line[..i], &line[i + 1..]),
        None => ("", line),
    };
    out.extend(std::iter::repeat_n(Op::Load, rhs.matches('[').count()));
    if assign.is_some() {
        out.extend(std::iter::repeat_n(Op::Add, rhs.matches('+').count()));
        out.extend(std::iter::repeat_n(Op::Mul, rhs.matches('*').count()));
        if lhs.contains('[') {
            out.push(Op::Store);
        }
    }
}

fn host_ops(raw: &str, blank: &str, strings: &mut Vec<(bool, String)>, out: &mut Vec<HostOp>) {
    static CALL: OnceLock<Regex> = OnceLock::new();
    static LAUNCH: OnceLock<Regex> = OnceLock::new();
    static COND: OnceLock<[Regex; 1]> = OnceLock::new();
    let [cond] = COND.get_or_init(|| [word_re("(if|for|while)")]);
    if cond.is_match(blank) {
        out.push(HostOp::Cond);
    }
    let printing = ["printf", "cout", "cerr", "puts", "fprintf", "std::clog"].iter().any(|k| blank.contains(k));
    if printing {
        let err = blank.contains("cerr") || blank.contains("stderr") || blank.contains("clog");
        let mut lits = string_literals(raw);
        if lits.is_empty() && blank.contains("endl") {
            lits.push(String::new());
        }
        let n = lits.len();
        for (i, mut lit) in lits.into_iter().enumerate() {
            if i + 1 == n && (blank.contains("endl") || blank.contains("puts")) {
                lit.push_str("\\n");
            }
            out.push(HostOp::Print { err, label: strings.len() });
            strings.push((err, lit));
        }
    }
    if let Some(c) = re(&LAUNCH, r"\b([A-Za-z_]\w*)\s*<<<").captures(blank) {
        out.push(HostOp::Launch(c[1].to_string()));
    }
    for c in re(&CALL, r"\b([A-Za-z_][\w:]*)\s*\(").captures_iter(blank) {
        let name = &c[1];
        if ["if", "for", "while", "switch", "return", "sizeof", "printf", "puts", "fprintf"].contains(&name) {
            continue;
        }
        out.push(HostOp::Call(name.to_string()));
    }
    if blank.contains('=') && (blank.contains('+') || blank.contains('*')) {
        out.push(HostOp::Arith);
    }
}

/// Builds the operation model; `Err` carries a compiler-style diagnostic.
pub(crate) fn model_source(src: &str, file: &str) -> Result<Model, String> {
    static HEADER: OnceLock<Regex> = OnceLock::new();
    let header_re = re(&HEADER, r"([A-Za-z_]\w*)\s*\([^()]*(?:\([^()]*\)[^()]*)*\)\s*(?:const\s*)?$");
    let stripped = strip_c_comments(src);
    let mut model = Model::default();
    let mut depth = 0usize;
    let mut header = String::new();
    let mut current: Option<(bool, String, Vec<Op>, Vec<HostOp>)> = None;
    let mut fn_depth = 0usize;
    for (lineno, raw) in stripped.lines().enumerate() {
        let blank = blank_literals(raw);
        let trimmed = blank.trim();
        if trimmed.starts_with('#') {
            continue;
        }
        let mut body_part = String::new();
        for ch in blank.chars() {
            match ch {
                '{' => {
                    if depth == 0 && current.is_none() {
                        let h = header.trim().to_string();
                        let lhs = h.split('=').next().unwrap_or("");
                        if let Some(c) = header_re.captures(h.trim_end()).filter(|_| !lhs.contains("struct ")) {
                            let is_kernel = ["__global__", "__device__", "__kernel", "kernel void"].iter().any(|k| h.contains(k));
                            current = Some((is_kernel, c[1].to_string(), Vec::new(), Vec::new()));
                            fn_depth = 1;
                        }
                        header.clear();
                    }
                    depth += 1;
                    body_part.push(ch);
                }
                '}' => {
                    if depth == 0 {
                        return Err(format!("{file}:{}:1: error: extraneous closing brace ('}}')", lineno + 1));
                    }
                    depth -= 1;
                    if current.is_some() && depth + 1 == fn_depth {
                        let (k, name, ops, hops) = current.take().expect("checked");
                        if k {
                            model.kernels.push(Kernel { name, ops });
                        } else {
                            model.host.push(HostFn { name, ops: hops });
                        }
                    }
                    body_part.push(ch);
                }
                ';' if depth == 0 => header.clear(),
                c if depth == 0 => header.push(c),
                c => body_part.push(c),
            }
        }
        if depth == 0 {
            header.push(' ');
        }
        if let Some((is_kernel, _, ops, hops)) = current.as_mut() {
            if *is_kernel {
                kernel_ops(&blank, ops);
            } else {
                host_ops(raw, &blank, &mut model.strings, hops);
            }
        }
    }
    if depth != 0 {
        let n = stripped.lines().count();
        return Err(format!("{file}:{n}:1: error: expected '}}'\n1 error generated."));
    }
    Ok(model)
}

pub(crate) fn checksum(kernels: &[Kernel]) -> String {
    let mut key = String::new();
    for k in kernels {
        key.push_str(&k.name);
        key.push(':');
        key.extend(k.ops.iter().map(|o| o.code()));
        key.push(';');
    }
    sha256_hex(key)[..16].to_string()
}

// ---------------------------------------------------------------------------
// Rendering

fn encoding(seed: &str) -> (String, String) {
    let h = sha256_hex(seed);
    (format!("0x{}", &h[..16]), format!("0x{}", &h[16..32]))
}

pub(crate) fn render_sass(kernels: &[Kernel], arch: &str) -> String {
    let sm = arch.trim_start_matches("sm_").trim_start_matches("sm");
    let mut s = String::new();
    let _ = writeln!(s, "\nFatbin elf code:\n================\narch = sm_{sm}\ncode version = [1,7]\nhost = linux\ncompile_size = 64bit\n");
    let _ = writeln!(s, "\tcode for sm_{sm}");
    for (ki, k) in kernels.iter().enumerate() {
        let _ = writeln!(s, "\t\tFunction : {}", k.name);
        let _ = writeln!(
            s,
            "\t.headerflags\t@\"EF_CUDA_TEXMODE_UNIFIED EF_CUDA_64BIT_ADDRESS EF_CUDA_SM{sm} EF_CUDA_VIRTUAL_SM(EF_CUDA_SM{sm})\""
        );
        let mut body: Vec<String> = vec!["MOV R1, c[0x0][0x28] ;".into(), "S2R R0, SR_TID.X ;".into(), "S2R R3, SR_CTAID.X ;".into(), "IMAD R0, R3, c[0x0][0x0], R0 ;".into()];
        let mut r = 4;
        for op in &k.ops {
            r = (r + 1) % 24 + 2;
            body.push(match op {
                Op::Load => format!("LDG.E R{r}, [R2.64] ;"),
                Op::Store => format!("STG.E [R4.64], R{r} ;"),
                Op::Add => format!("FADD R{r}, R{}, R{} ;", r + 1, r + 2),
                Op::Mul => format!("FMUL R{r}, R{}, R{} ;", r + 1, r + 2),
                Op::Cmp => format!("ISETP.GE.AND P0, PT, R{r}, c[0x0][0x170], PT ;"),
                Op::Branch => format!("@P0 BRA `(.L_x_{ki}) ;"),
                Op::Sync => "BAR.SYNC.DEFER_BLOCKING 0x0 ;".into(),
                Op::Atomic => format!("RED.E.ADD.F32.FTZ.RN.STRONG.GPU [R4.64], R{r} ;"),
                Op::Cvt => format!("I2F R{r}, R{r} ;"),
            });
        }
        body.push("EXIT ;".into());
        body.push(format!("BRA `(.L_x_{ki}) ;"));
        for (i, ins) in body.iter().enumerate() {
            let (a, b) = encoding(&format!("{}:{i}:{ins}", k.name));
            let _ = writeln!(s, "        /*{:04x}*/                   {ins:<40} /* {a} */", i * 16);
            let _ = writeln!(s, "                                                                        /* {b} */");
        }
        let _ = writeln!(s, "\t\t..........\n");
    }
    s
}

pub(crate) fn render_rdna3(kernels: &[Kernel], arch: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "\t.text\n\t.amdgcn_target \"amdgcn-amd-amdhsa--{arch}\"");
    for (ki, k) in kernels.iter().enumerate() {
        let n = &k.name;
        let _ = writeln!(s, "\t.protected\t{n}\n\t.globl\t{n}\n\t.p2align\t8\n\t.type\t{n},@function\n{n}:");
        let _ = writeln!(s, "\ts_clause 0x1\n\ts_load_b32 s2, s[0:1], 0x2c\n\ts_load_b64 s[4:5], s[0:1], 0x0\n\tv_and_b32_e32 v0, 0x3ff, v0\n\ts_waitcnt lgkmcnt(0)\n\ts_and_b32 s2, s2, 0xffff\n\tv_mad_u64_u32 v[1:2], null, s15, s2, v[0:1]");
        let mut labels = Vec::new();
        let mut v = 2;
        for op in &k.ops {
            v = (v + 1) % 60 + 3;
            let lines: Vec<String> = match op {
                Op::Load => vec![
                    format!("global_load_b32 v{v}, v[1:2], off"),
                    "s_waitcnt vmcnt(0)".into(),
                ],
                Op::Store => vec![format!("global_store_b32 v[1:2], v{v}, off")],
                Op::Add => vec![format!("v_add_f32_e32 v{v}, v{}, v{}", v + 1, v + 2)],
                Op::Mul => vec![format!("v_mul_f32_e32 v{v}, v{}, v{}", v + 1, v + 2)],
                Op::Cmp => vec![format!("v_cmp_gt_i32_e32 vcc_lo, s2, v{v}"), "s_and_saveexec_b32 s3, vcc_lo".into()],
                Op::Branch => {
                    let l = format!(".LBB{ki}_{}", labels.len() + 1);
                    labels.push(l.clone());
                    vec![format!("s_cbranch_execz {l}")]
                }
                Op::Sync => vec!["s_waitcnt lgkmcnt(0)".into(), "s_barrier".into(), "buffer_gl0_inv".into()],
                Op::Atomic => vec![format!("global_atomic_add_f32 v[1:2], v{v}, off")],
                Op::Cvt => vec![format!("v_cvt_f32_i32_e32 v{v}, v{v}")],
            };
            for l in lines {
                let _ = writeln!(s, "\t{l}");
            }
        }
        for l in &labels {
            let _ = writeln!(s, "{l}:");
        }
        let _ = writeln!(s, "\ts_endpgm\n.Lfunc_end{ki}:\n\t.size\t{n}, .Lfunc_end{ki}-{n}");
    }
    s
}

pub(crate) fn render_ptx(kernels: &[Kernel], arch: &str) -> String {
    let mut s = String::from("//\n// Generated by NVIDIA NVVM Compiler\n//\n\n.version 7.8\n");
    let _ = writeln!(s, ".target {arch}\n.address_size 64\n");
    for k in kernels {
        let _ = writeln!(s, ".visible .entry {}(\n\t.param .u64 {}_param_0\n)\n{{", k.name, k.name);
        let _ = writeln!(s, "\t.reg .pred \t%p<2>;\n\t.reg .f32 \t%f<64>;\n\tld.param.u64 \t%rd1, [{}_param_0];", k.name);
        for (i, op) in k.ops.iter().enumerate() {
            let l = match op {
                Op::Load => format!("ld.global.f32 \t%f{i}, [%rd1];"),
                Op::Store => format!("st.global.f32 \t[%rd1], %f{i};"),
                Op::Add => format!("add.f32 \t%f{i}, %f{i}, %f{i};"),
                Op::Mul => format!("mul.f32 \t%f{i}, %f{i}, %f{i};"),
                Op::Cmp => "setp.ge.s32 \t%p1, %r1, %r2;".into(),
                Op::Branch => "@%p1 bra \t$L__BB0_2;".into(),
                Op::Sync => "bar.sync \t0;".into(),
                Op::Atomic => format!("atom.global.add.f32 \t%f{i}, [%rd1], %f{i};"),
                Op::Cvt => format!("cvt.rn.f32.s32 \t%f{i}, %r1;"),
            };
            let _ = writeln!(s, "\t{l}");
        }
        let _ = writeln!(s, "$L__BB0_2:\n\tret;\n\n}}");
    }
    s
}

pub(crate) fn render_llvm(kernels: &[Kernel], arch: &str) -> String {
    let mut s = format!("; ModuleID = 'kernel.cl'\ntarget triple = \"amdgcn-amd-amdhsa\"\n\n");
    for k in kernels {
        let _ = writeln!(s, "define protected amdgpu_kernel void @{}(ptr addrspace(1) %0) #0 {{\nentry:", k.name);
        for (i, op) in k.ops.iter().enumerate() {
            let l = match op {
                Op::Load => format!("%v{i} = load float, ptr addrspace(1) %0, align 4"),
                Op::Store => "store float 0.0, ptr addrspace(1) %0, align 4".to_string(),
                Op::Add => format!("%v{i} = fadd float 0.0, 1.0"),
                Op::Mul => format!("%v{i} = fmul float 1.0, 1.0"),
                Op::Cmp => format!("%c{i} = icmp slt i32 0, 1"),
                Op::Branch => format!("br label %bb{i}\nbb{i}:"),
                Op::Sync => "fence syncscope(\"workgroup\") release\n  call void @llvm.amdgcn.s.barrier()".into(),
                Op::Atomic => format!("%a{i} = atomicrmw fadd ptr addrspace(1) %0, float 1.0 monotonic"),
                Op::Cvt => format!("%f{i} = sitofp i32 1 to float"),
            };
            let _ = writeln!(s, "  {l}");
        }
        let _ = writeln!(s, "  ret void\n}}\n");
    }
    let _ = writeln!(s, "attributes #0 = {{ \"target-cpu\"=\"{arch}\" }}");
    s
}

pub(crate) fn render_host(model: &Model, vendor: &str, file: &str) -> String {
    let api = if vendor == "amd" { "hip" } else { "cuda" };
    let mut s = format!("\t.text\n\t.file\t\"{file}\"\n");
    let mut label = 0usize;
    for (fi, f) in model.host.iter().enumerate() {
        let n = &f.name;
        let _ = writeln!(s, "\t.globl\t{n}\n\t.p2align\t4, 0x90\n\t.type\t{n},@function\n{n}:\n\t.cfi_startproc\n\tpushq\t%rbp\n\t.cfi_def_cfa_offset 16\n\tmovq\t%rsp, %rbp\n\tsubq\t$48, %rsp");
        let mut pending = Vec::new();
        for op in &f.ops {
            match op {
                HostOp::Call(c) => {
                    let _ = writeln!(s, "\tmovq\t-8(%rbp), %rdi\n\tcallq\t{c}@PLT");
                }
                HostOp::Print { err, label: l } => {
                    let kind = if *err { "err" } else { "out" };
                    let _ = writeln!(s, "\tleaq\t.L.str.{kind}.{l}(%rip), %rdi\n\tmovb\t$0, %al\n\tcallq\tprintf@PLT");
                }
                HostOp::Launch(k) => {
                    let _ = writeln!(s, "\tmovabsq\t$4294967297, %rdi\n\tcallq\t__{api}PushCallConfiguration@PLT\n\ttestl\t%eax, %eax\n\tjne\t.LBB{fi}_{label}\n\tcallq\t_Z21__device_stub__{k}v");
                    pending.push(label);
                    label += 1;
                }
                HostOp::Arith => {
                    let _ = writeln!(s, "\tmovl\t-12(%rbp), %eax\n\taddl\t-16(%rbp), %eax\n\timull\t$3, %eax, %eax\n\tmovl\t%eax, -20(%rbp)");
                }
                HostOp::Cond => {
                    let _ = writeln!(s, "\tcmpl\t$0, -4(%rbp)\n\tjle\t.LBB{fi}_{label}");
                    pending.push(label);
                    label += 1;
                }
            }
        }
        for l in pending {
            let _ = writeln!(s, ".LBB{fi}_{l}:");
        }
        let _ = writeln!(s, "\txorl\t%eax, %eax\n\taddq\t$48, %rsp\n\tpopq\t%rbp\n\t.cfi_def_cfa %rsp, 8\n\tretq\n.Lfunc_end{fi}:\n\t.size\t{n}, .Lfunc_end{fi}-{n}\n\t.cfi_endproc");
    }
    if !model.kernels.is_empty() {
        let _ = writeln!(s, "\t.p2align\t4, 0x90\n\t.type\t__{api}_module_ctor,@function\n__{api}_module_ctor:\n\tpushq\t%rbx\n\tleaq\t__{api}_fatbin_wrapper(%rip), %rdi\n\tcallq\t__{api}RegisterFatBinary@PLT\n\tmovq\t%rax, %rbx");
        for k in &model.kernels {
            let _ = writeln!(s, "\tleaq\t_Z21__device_stub__{}v(%rip), %rsi\n\tmovq\t%rbx, %rdi\n\tcallq\t__{api}RegisterFunction@PLT", k.name);
        }
        let _ = writeln!(s, "\tpopq\t%rbx\n\tretq");
    }
    if !model.strings.is_empty() {
        let _ = writeln!(s, "\t.section\t.rodata.str1.1,\"aMS\",@progbits,1");
        for (i, (err, lit)) in model.strings.iter().enumerate() {
            let kind = if *err { "err" } else { "out" };
            let _ = writeln!(s, ".L.str.{kind}.{i}:\n\t.asciz\t\"{lit}\"");
        }
    }
    if !model.kernels.is_empty() {
        if vendor == "amd" {
            let _ = writeln!(s, "\t.section\t.hip_fatbin,\"a\",@progbits\n\t.p2align\t12\n__hip_fatbin:\n\t.zero\t8");
        } else {
            let _ = writeln!(s, "\t.section\t.nv_fatbin,\"a\",@progbits\n\t.p2align\t3\nfatbinData:");
            let h = sha256_hex(checksum(&model.kernels));
            for chunk in 0..4 {
                let _ = writeln!(s, "\t.quad\t0x{}", &h[chunk * 16..chunk * 16 + 16]);
            }
        }
        let _ = writeln!(s, "\t.section\t.data.rel.ro,\"aw\",@progbits\n__{api}_fatbin_wrapper:\n\t.long\t1180844977\n\t.long\t1");
    }
    let _ = writeln!(s, "\t.section\t\".note.GNU-stack\",\"\",@progbits");
    s
}

// ---------------------------------------------------------------------------
// Decoding assembly back to the model

#[cfg(test)]
pub(crate) fn decode_sass(text: &str) -> Vec<Kernel> {
    let mut kernels: Vec<Kernel> = Vec::new();
    for line in text.lines() {
        let line = match line.find("/*") {
            Some(i) if line[..i].trim().is_empty() => {
                // leading offset comment: keep what follows it
                let rest = &line[i..];
                match rest.find("*/") {
                    Some(j) => rest[j + 2..].split("/*").next().unwrap_or(""),
                    None => "",
                }
            }
            Some(i) => &line[..i],
            None => line,
        };
        let t = line.trim();
        if let Some(name) = t.strip_prefix("Function :").or_else(|| t.strip_prefix("Function:")) {
            kernels.push(Kernel { name: name.trim().to_string(), ops: Vec::new() });
            continue;
        }
        let Some(k) = kernels.last_mut() else { continue };
        let (guarded, t) = match t.strip_prefix('@') {
            Some(rest) => (true, rest.split_once(char::is_whitespace).map(|x| x.1).unwrap_or("").trim()),
            None => (false, t),
        };
        let mnemonic = t.split(|c: char| c.is_whitespace() || c == '.').next().unwrap_or("");
        let op = match mnemonic {
            "LDG" => Some(Op::Load),
            "STG" => Some(Op::Store),
            "FADD" => Some(Op::Add),
            "FMUL" => Some(Op::Mul),
            "ISETP" => Some(Op::Cmp),
            "BRA" if guarded => Some(Op::Branch),
            "BAR" => Some(Op::Sync),
            "RED" | "ATOM" | "ATOMG" => Some(Op::Atomic),
            "I2F" => Some(Op::Cvt),
            _ => None,
        };
        k.ops.extend(op);
    }
    kernels
}

pub(crate) fn decode_rdna3(text: &str) -> Vec<Kernel> {
    let mut globals = BTreeSet::new();
    let mut kernels: Vec<Kernel> = Vec::new();
    for line in text.lines() {
        let t = line.split(';').next().unwrap_or("").trim();
        if let Some(name) = t.strip_prefix(".globl") {
            globals.insert(name.trim().to_string());
            continue;
        }
        if let Some(label) = t.strip_suffix(':') {
            if globals.contains(label) {
                kernels.push(Kernel { name: label.to_string(), ops: Vec::new() });
            }
            continue;
        }
        let Some(k) = kernels.last_mut() else { continue };
        let m = t.split_whitespace().next().unwrap_or("");
        let op = if m.starts_with("global_load") {
            Some(Op::Load)
        } else if m.starts_with("global_store") {
            Some(Op::Store)
        } else if m.starts_with("v_add_f32") {
            Some(Op::Add)
        } else if m.starts_with("v_mul_f32") {
            Some(Op::Mul)
        } else if m.starts_with("v_cmp_") {
            Some(Op::Cmp)
        } else if m.starts_with("s_cbranch") {
            Some(Op::Branch)
        } else if m == "s_barrier" {
            Some(Op::Sync)
        } else if m.starts_with("global_atomic") {
            Some(Op::Atomic)
        } else if m.starts_with("v_cvt") {
            Some(Op::Cvt)
        } else {
            None
        };
        k.ops.extend(op);
    }
    kernels
}

pub(crate) fn decode_ptx(text: &str) -> Vec<Kernel> {
    let mut kernels: Vec<Kernel> = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix(".visible .entry ") {
            let name = rest.split('(').next().unwrap_or("").trim();
            kernels.push(Kernel { name: name.to_string(), ops: Vec::new() });
            continue;
        }
        let Some(k) = kernels.last_mut() else { continue };
        let (guarded, t) = match t.strip_prefix('@') {
            Some(rest) => (true, rest.split_once(char::is_whitespace).map(|x| x.1).unwrap_or("").trim()),
            None => (false, t),
        };
        let m = t.split_whitespace().next().unwrap_or("");
        let op = match m.split('.').next().unwrap_or("") {
            "ld" if m.contains(".global") => Some(Op::Load),
            "st" if m.contains(".global") => Some(Op::Store),
            "add" => Some(Op::Add),
            "mul" => Some(Op::Mul),
            "setp" => Some(Op::Cmp),
            "bra" if guarded => Some(Op::Branch),
            "bar" => Some(Op::Sync),
            "atom" => Some(Op::Atomic),
            "cvt" => Some(Op::Cvt),
            _ => None,
        };
        k.ops.extend(op);
    }
    kernels
}

/// Strings printed by a host listing, split into (stdout, stderr).
pub(crate) fn host_strings(host_asm: &str) -> (String, String) {
    let (mut out, mut err) = (String::new(), String::new());
    let mut current: Option<bool> = None;
    for line in host_asm.lines() {
        let t = line.trim();
        if let Some(label) = t.strip_suffix(':') {
            current = if label.starts_with(".L.str.out.") {
                Some(false)
            } else if label.starts_with(".L.str.err.") {
                Some(true)
            } else {
                None
            };
            continue;
        }
        if let (Some(is_err), Some(rest)) = (current, t.strip_prefix(".asciz")) {
            let lit = rest.trim().trim_matches('"');
            let text = unescape(lit);
            if is_err {
                err.push_str(&text);
            } else {
                out.push_str(&text);
            }
            current = None;
        }
    }
    (out, err)
}

fn unescape(s: &str) -> String {
    let mut out = String::new();
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('0') => {}
            Some(o) => out.push(o),
            None => out.push('\\'),
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Assembler checks

fn rdna3_mnemonic_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r"^(s|v|ds|global|buffer|flat|scratch|exp|image)_[a-z0-9_]+$")
}

/// Validates RDNA3 text the way an assembler would, reporting the first errors.
pub(crate) fn assemble_rdna3(text: &str, file: &str) -> Result<(), String> {
    let mut labels = BTreeSet::new();
    for line in text.lines() {
        let t = line.split(';').next().unwrap_or("").trim();
        if let Some(l) = t.strip_suffix(':') {
            labels.insert(l.to_string());
        }
    }
    let mut diag = String::new();
    let mut errors = 0;
    for (i, line) in text.lines().enumerate() {
        let t = line.split(';').next().unwrap_or("").trim();
        if t.is_empty() || t.starts_with('.') || t.ends_with(':') || t.starts_with("//") {
            continue;
        }
        let mut parts = t.splitn(2, char::is_whitespace);
        let m = parts.next().unwrap_or("");
        let operands = parts.next().unwrap_or("").trim();
        let col = line.find(m).unwrap_or(0) + 1;
        if !rdna3_mnemonic_re().is_match(m) {
            let _ = writeln!(diag, "{file}:{}:{col}: error: invalid instruction\n{line}\n^", i + 1);
            errors += 1;
            continue;
        }
        if m.starts_with("s_cbranch") || m == "s_branch" {
            let target = operands.split(',').next().unwrap_or("").trim();
            if !target.is_empty() && !labels.contains(target) {
                let _ = writeln!(diag, "{file}:{}:{col}: error: undefined label '{target}'\n{line}\n^", i + 1);
                errors += 1;
            }
        }
    }
    if errors == 0 {
        Ok(())
    } else {
        let _ = writeln!(diag, "{errors} error{} generated.", if errors == 1 { "" } else { "s" });
        Err(diag)
    }
}

// ---------------------------------------------------------------------------
// Executables

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockExecutable {
    pub mock_executable: bool,
    pub stdout: String,
    pub stderr: String,
    pub exit_code: i32,
    pub sleep_ms: u64,
}

impl MockExecutable {
    pub(crate) fn build(host_asm: &str, kernels: &[Kernel]) -> MockExecutable {
        let (mut stdout, stderr) = host_strings(host_asm);
        let _ = writeln!(stdout, "device-checksum: {}", checksum(kernels));
        MockExecutable { mock_executable: true, stdout, stderr, exit_code: 0, sleep_ms: 0 }
    }

    pub fn parse(text: &str) -> Option<MockExecutable> {
        serde_json::from_str::<MockExecutable>(text).ok().filter(|m| m.mock_executable)
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }
}

// ---------------------------------------------------------------------------
// hipify

fn swap_cuda_prefixes(text: &str) -> String {
    static API: OnceLock<Regex> = OnceLock::new();
    static INCLUDE: OnceLock<Regex> = OnceLock::new();
    let inc = re(&INCLUDE, r#"(?m)^[ \t]*#[ \t]*include[ \t]*[<"](cuda_runtime\.h|cuda\.h|cuda_runtime_api\.h)[>"][ \t]*$"#);
    let mut out = inc.replace_all(text, "#include <hip/hip_runtime.h>").into_owned();
    // collapse duplicates created when several CUDA headers were included
    let line = "#include <hip/hip_runtime.h>";
    let mut seen = false;
    out = out
        .split_inclusive('\n')
        .filter(|l| {
            if l.trim() == line {
                if seen {
                    return false;
                }
                seen = true;
            }
            true
        })
        .collect();
    let out = re(&API, r"\bcuda([A-Z_]\w*)").replace_all(&out, "hip$1").into_owned();
    if seen {
        out
    } else {
        format!("{line}\n{out}")
    }
}

pub(crate) fn hipify(text: &str, file: &str) -> Result<String, String> {
    static ASM: OnceLock<Regex> = OnceLock::new();
    let asm = re(&ASM, r"\basm\s*(volatile\s*)?\(");
    for (i, line) in strip_c_comments(text).lines().enumerate() {
        if asm.is_match(&blank_literals(line)) {
            return Err(format!(
                "{file}:{}: error: inline PTX assembly has no HIP equivalent; unsupported statement\n  {}\n",
                i + 1,
                line.trim()
            ));
        }
    }
    Ok(swap_cuda_prefixes(text))
}

// ---------------------------------------------------------------------------
// Dispatch

fn kv(args: &[String]) -> BTreeMap<&str, &str> {
    args.iter().filter_map(|a| a.split_once('=')).collect()
}

fn read(path: Option<&&str>) -> Result<String, String> {
    let p = path.ok_or("mock: missing input argument")?;
    std::fs::read_to_string(p).map_err(|e| format!("mock: cannot read {p}: {e}"))
}

fn hip_header_check(src: &str, file: &str) -> Result<(), String> {
    static HIP_API: OnceLock<Regex> = OnceLock::new();
    let api = re(&HIP_API, r"\bhip[A-Z]\w*");
    if src.contains("hip/hip_runtime.h") {
        return Ok(());
    }
    let code = strip_c_comments(src);
    for (i, line) in code.lines().enumerate() {
        let blank = blank_literals(line);
        if let Some(m) = api.find(&blank) {
            return Err(format!(
                "{file}:{}:{}: error: use of undeclared identifier '{}'\n{line}\n1 error generated when compiling for host.",
                i + 1,
                m.start() + 1,
                m.as_str()
            ));
        }
    }
    Ok(())
}

fn file_name(p: Option<&&str>) -> String {
    p.and_then(|p| Path::new(p).file_name()).map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into())
}

/// Primary-input path used to key script entries.
pub(crate) fn primary_input(args: &[String]) -> Option<String> {
    let m = kv(args);
    ["in", "device", "exe"].iter().find_map(|k| m.get(k).map(|v| v.to_string()))
}

/// Runs builtin `tool` with `key=value` args for the given flavour.
pub(crate) fn builtin(tool: &str, args: &[String], vendor: &str) -> ToolResult {
    let a = kv(args);
    let arch = a.get("arch").copied().unwrap_or("");
    let fname = file_name(a.get("in"));
    let outcome = (|| -> Result<ToolResult, String> {
        Ok(match tool {
            "cat" => ToolResult::ok().stdout(read(a.get("in"))?),
            "hipify" => ToolResult::ok().stdout(hipify(&read(a.get("in"))?, &fname)?),
            "nvcc" | "hipcc" => {
                let src = read(a.get("in"))?;
                if tool == "hipcc" {
                    hip_header_check(&src, &fname)?;
                }
                let model = model_source(&src, &fname)?;
                let host = render_host(&model, vendor, &fname);
                let exe = MockExecutable::build(&host, &model.kernels);
                ToolResult::ok().file(a.get("exe").ok_or("mock: exe= required")?, exe.to_json())
            }
            "cuobjdump" => {
                let src = read(a.get("in"))?;
                let model = model_source(&src, &fname)?;
                let mut dump = render_host(&model, "nvidia", &fname);
                dump.push_str(&render_sass(&model.kernels, arch));
                ToolResult::ok().stdout(dump)
            }
            "hipcc-device" => {
                let src = read(a.get("in"))?;
                hip_header_check(&src, &fname)?;
                let model = model_source(&src, &fname)?;
                ToolResult::ok().file(a.get("out").ok_or("mock: out= required")?, render_rdna3(&model.kernels, arch))
            }
            "hipcc-host" => {
                let src = read(a.get("in"))?;
                hip_header_check(&src, &fname)?;
                let model = model_source(&src, &fname)?;
                ToolResult::ok().file(a.get("out").ok_or("mock: out= required")?, render_host(&model, "amd", &fname))
            }
            "recombine" => {
                let device = read(a.get("device"))?;
                let host = read(a.get("host"))?;
                assemble_rdna3(&device, &file_name(a.get("device")))?;
                let exe = MockExecutable::build(&host, &decode_rdna3(&device));
                let mut r = ToolResult::ok().file(a.get("exe").ok_or("mock: exe= required")?, exe.to_json());
                if let Some(obj) = a.get("obj") {
                    r = r.file(obj, format!("MOCK-OBJECT\n{host}"));
                }
                r
            }
            "ocl-ptx-dump" => {
                let src = read(a.get("in"))?;
                let model = model_source(&src, &fname).map_err(|e| format!("build log:\n{e}"))?;
                if model.kernels.is_empty() {
                    return Err(format!("build log:\n{fname}: error: no __kernel function defined"));
                }
                ToolResult::ok().file(a.get("out").ok_or("mock: out= required")?, render_ptx(&model.kernels, "sm_80"))
            }
            "ptxas" => {
                let ptx = read(a.get("in"))?;
                let kernels = decode_ptx(&ptx);
                ToolResult::ok().file(a.get("out").ok_or("mock: out= required")?, format!("MOCK-CUBIN\n{}", render_sass(&kernels, arch)))
            }
            "cuobjdump-object" => {
                let obj = read(a.get("in"))?;
                let listing = obj.strip_prefix("MOCK-CUBIN\n").ok_or("cuobjdump fatal   : Could not open input file")?;
                ToolResult::ok().stdout(listing.to_string())
            }
            "clang-ocl" => {
                let src = read(a.get("in"))?;
                let model = model_source(&src, &fname)?;
                ToolResult::ok()
                    .file(a.get("ll").ok_or("mock: ll= required")?, render_llvm(&model.kernels, arch))
                    .file(a.get("out").ok_or("mock: out= required")?, render_rdna3(&model.kernels, arch))
            }
            other => return Err(format!("mock: unknown tool `{other}`")),
        })
    })();
    outcome.unwrap_or_else(ToolResult::fail)
}

#[cfg(test)]
mod tests {
    use super::*;

    const VECADD: &str = r#"#include <cstdio>
#include <cuda_runtime.h>

__global__ void vecAdd(const float *a, const float *b, float *c, int n) {
    int i = blockIdx.x * blockDim.x + threadIdx.x;
    if (i < n) {
        c[i] = a[i] + b[i];
    }
}

int main() {
    float *d;
    cudaMalloc(&d, 16);
    vecAdd<<<1, 4>>>(d, d, d, 4);
    cudaDeviceSynchronize();
    printf("done\n");
    return 0;
}
"#;

    #[test]
    fn hipify_swaps_prefixes_and_header() {
        let out = hipify("#include <cuda_runtime.h>\ncudaMalloc(&p, 4);\ncudaFree(p);\n", "t.cu").unwrap();
        assert_eq!(out, "#include <hip/hip_runtime.h>\nhipMalloc(&p, 4);\nhipFree(p);\n");
        let out = hipify("cudaMalloc(&p, 4);\n", "t.cu").unwrap();
        assert!(out.starts_with("#include <hip/hip_runtime.h>\n"));
    }

    #[test]
    fn hipify_rejects_inline_ptx() {
        let src = "__global__ void k(int *p) {\n  asm volatile(\"membar.gl;\");\n}\n";
        assert!(hipify(src, "k.cu").unwrap_err().contains("inline PTX"));
        assert!(hipify("// asm(\"x\")\nint x;\n", "k.cu").is_ok());
    }

    #[test]
    fn model_extracts_kernels_and_strings() {
        let m = model_source(VECADD, "v.cu").unwrap();
        assert_eq!(m.kernels.len(), 1);
        assert_eq!(m.kernels[0].name, "vecAdd");
        assert!(m.kernels[0].ops.contains(&Op::Store));
        assert_eq!(m.host.len(), 1);
        assert_eq!(m.strings, vec![(false, "done\\n".to_string())]);
    }

    #[test]
    fn renderings_decode_to_the_same_model() {
        let m = model_source(VECADD, "v.cu").unwrap();
        assert_eq!(decode_sass(&render_sass(&m.kernels, "sm_80")), m.kernels);
        assert_eq!(decode_rdna3(&render_rdna3(&m.kernels, "gfx1100")), m.kernels);
        assert_eq!(decode_ptx(&render_ptx(&m.kernels, "sm_80")), m.kernels);
    }

    #[test]
    fn assembler_checks() {
        let m = model_source(VECADD, "v.cu").unwrap();
        let asm = render_rdna3(&m.kernels, "gfx1100");
        assemble_rdna3(&asm, "d.s").unwrap();
        let bad = asm.replacen("s_endpgm", "sumba_send_msg_b32 v0, v3", 1);
        assert!(assemble_rdna3(&bad, "d.s").unwrap_err().contains("error: invalid instruction"));
        let bad = asm.replace(".LBB0_1:\n", "");
        assert!(assemble_rdna3(&bad, "d.s").unwrap_err().contains("undefined label '.LBB0_1'"));
    }

    #[test]
    fn host_strings_split_streams() {
        let src = "int main() {\n  std::cout << \"a\" << std::endl;\n  std::cerr << \"b\\n\";\n  printf(\"c %d\\n\", 1);\n}\n";
        let m = model_source(src, "x.cu").unwrap();
        let (out, err) = host_strings(&render_host(&m, "nvidia", "x.cu"));
        assert_eq!(out, "a\nc %d\n");
        assert_eq!(err, "b\n");
    }

    #[test]
    fn unbalanced_source_fails() {
        assert!(model_source("__global__ void k() {\n", "x.cu").unwrap_err().contains("error: expected '}'"));
    }

    #[test]
    fn missing_hip_header_detected() {
        assert!(hip_header_check("int main() { hipMalloc(0, 0); }", "x.hip").unwrap_err().contains("undeclared identifier 'hipMalloc'"));
        assert!(hip_header_check("#include <hip/hip_runtime.h>\nint main() { hipMalloc(0, 0); }", "x.hip").is_ok());
    }
}
