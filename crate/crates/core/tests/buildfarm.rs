use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use forge_core::buildfarm::{
    compile_cuda, compile_hip, compile_opencl, hipify_translate, link_deferred, run_executable, ArtifactKind, BuildError,
    LaunchSpy, MockScript, Toolchain, ToolchainName, ToolchainSpec,
};
use forge_core::ingest::{Lang, Origin, SourceUnit};

const VECADD: &str = r#"#include <cstdio>
#include <cuda_runtime.h>

__global__ void vecAdd(const float *a, const float *b, float *c, int n) {
    int i = blockIdx.x * blockDim.x + threadIdx.x;
    if (i < n) {
        c[i] = a[i] + b[i];
    }
}

int main() {
    float *d = nullptr;
    cudaMalloc(&d, 64);
    vecAdd<<<1, 16>>>(d, d, d, 16);
    cudaDeviceSynchronize();
    printf("sum ok\n");
    cudaFree(d);
    return 0;
}
"#;

fn cuda(text: &str) -> SourceUnit {
    SourceUnit::new(Origin::Stack, Lang::Cuda, text, "src/k.cu", Some("org/repo".into()), Some("mit".into()))
}

fn mock(flavour: ToolchainName, spy: &Arc<LaunchSpy>) -> Toolchain {
    let arch = match flavour {
        ToolchainName::Amd | ToolchainName::OpenclAmd => "gfx1100",
        _ => "sm_80",
    };
    Toolchain::new(ToolchainSpec::mock(flavour, arch)).with_spy(spy.clone())
}

#[test]
fn hipify_prefix_swap_on_small_fixture() {
    let work = tempfile::tempdir().unwrap();
    let spy = Arc::new(LaunchSpy::new());
    let unit = cuda("float *p;\ncudaMalloc(&p, 4);\ncudaFree(p);\n");
    let hip = hipify_translate(&unit, &mock(ToolchainName::Amd, &spy), work.path()).unwrap();
    assert_eq!(hip.lang, Lang::Hip);
    assert!(hip.text.contains("hipMalloc(&p, 4);") && hip.text.contains("hipFree(p);"));
    assert!(!hip.text.contains("cuda"));
    assert_eq!(hip.repo_id, unit.repo_id);
    assert_eq!(hip.origin, unit.origin);
    assert_eq!(hip.license, unit.license);
    assert_eq!(hip.relative_path, "src/k.hip");
    assert_eq!(spy.count(), 0);
}

#[test]
fn inline_ptx_fails_translation() {
    let work = tempfile::tempdir().unwrap();
    let spy = Arc::new(LaunchSpy::new());
    let unit = cuda("__global__ void k(unsigned *o) {\n  unsigned lane;\n  asm(\"mov.u32 %0, %%laneid;\" : \"=r\"(lane));\n  o[0] = lane;\n}\n");
    match hipify_translate(&unit, &mock(ToolchainName::Amd, &spy), work.path()) {
        Err(BuildError::TranslateFailed { diagnostics }) => assert!(diagnostics.contains("inline PTX")),
        other => panic!("expected TranslateFailed, got {other:?}"),
    }
}

#[test]
fn translate_batch_reports_partial_success() {
    let work = tempfile::tempdir().unwrap();
    let spy = Arc::new(LaunchSpy::new());
    let tc = mock(ToolchainName::Amd, &spy);
    let units: Vec<SourceUnit> = (0..10)
        .map(|i| {
            let body = if i % 4 == 0 { "asm volatile(\"trap;\");" } else { "o[0] = 1;" };
            SourceUnit::new(Origin::Stack, Lang::Cuda, format!("__global__ void k{i}(int *o) {{ {body} }}\n"), format!("{i}.cu"), None, None)
        })
        .collect();
    let ok = units.iter().filter(|u| hipify_translate(u, &tc, work.path()).is_ok()).count();
    assert_eq!(ok, 7);
}

#[test]
fn cuda_compile_produces_all_artifacts() {
    let work = tempfile::tempdir().unwrap();
    let spy = Arc::new(LaunchSpy::new());
    let unit = cuda(VECADD);
    let before = unit.clone();
    let out = compile_cuda(&unit, &mock(ToolchainName::Nvidia, &spy), work.path()).unwrap();
    assert!(out.ok);
    for k in [ArtifactKind::Executable, ArtifactKind::MixedDump] {
        assert!(out.path(k).unwrap().exists(), "{k}");
        assert!(out.artifacts[&k].is_relative());
    }
    let dump = out.read(ArtifactKind::MixedDump).unwrap();
    assert!(dump.contains("Function : vecAdd") && dump.contains("callq\tprintf@PLT"));
    assert_eq!(unit, before);
    assert!(out.artifacts[&ArtifactKind::Executable].starts_with(&unit.id));
}

#[test]
fn scripted_failure_keeps_diagnostics() {
    let work = tempfile::tempdir().unwrap();
    let spy = Arc::new(LaunchSpy::new());
    let src = "__global__ void k(float *o) { o[0] = undefined_fn(); }\n";
    let diag = "k.cu(1): error: identifier \"undefined_fn\" is undefined\n\n1 error detected in the compilation of \"k.cu\".\n";
    let mut script = MockScript::default();
    script.fail(src, "compile", None, diag);
    let tc = mock(ToolchainName::Nvidia, &spy).with_script(script);
    match compile_cuda(&cuda(src), &tc, work.path()) {
        Err(BuildError::CompileFailed(o)) => {
            assert!(!o.ok);
            assert_eq!(o.diagnostics, diag);
        }
        other => panic!("expected CompileFailed, got {other:?}"),
    }
}

#[test]
fn deferred_hip_build_separates_assemblies() {
    let work = tempfile::tempdir().unwrap();
    let spy = Arc::new(LaunchSpy::new());
    let tc = mock(ToolchainName::Amd, &spy);
    let hip = hipify_translate(&cuda(VECADD), &tc, work.path()).unwrap();
    let deferred = compile_hip(&hip, &tc, work.path(), true).unwrap();
    for k in [ArtifactKind::HostAsm, ArtifactKind::DeviceAsm, ArtifactKind::Executable] {
        assert!(deferred.path(k).unwrap().exists(), "{k}");
    }
    let device = deferred.read(ArtifactKind::DeviceAsm).unwrap();
    let host = deferred.read(ArtifactKind::HostAsm).unwrap();
    assert!(device.contains("s_endpgm") && !device.contains("callq"));
    assert!(host.contains("callq") && !host.contains("s_endpgm"));

    let single = compile_hip(&hip, &tc, work.path(), false).unwrap();
    assert!(single.path(ArtifactKind::Executable).unwrap().exists());
    assert!(!single.artifacts.contains_key(&ArtifactKind::DeviceAsm));

    let run = |o: &forge_core::buildfarm::CompileOutcome| {
        run_executable(&tc, &o.path(ArtifactKind::Executable).unwrap(), &[], Duration::from_secs(5), 1).unwrap()[0].stdout.clone()
    };
    assert_eq!(run(&deferred), run(&single));

    let nv = mock(ToolchainName::Nvidia, &spy);
    let cu = compile_cuda(&cuda(VECADD), &nv, work.path()).unwrap();
    let cu_out = run_executable(&nv, &cu.path(ArtifactKind::Executable).unwrap(), &[], Duration::from_secs(5), 1).unwrap();
    assert_eq!(cu_out[0].stdout, run(&deferred));
    assert!(String::from_utf8_lossy(&cu_out[0].stdout).starts_with("sum ok\ndevice-checksum: "));
    assert_eq!(spy.count(), 0);
}

#[test]
fn recombine_failure_is_distinct() {
    let work = tempfile::tempdir().unwrap();
    let spy = Arc::new(LaunchSpy::new());
    let tc = mock(ToolchainName::Amd, &spy);
    let hip = hipify_translate(&cuda(VECADD), &tc, work.path()).unwrap();
    let ok = compile_hip(&hip, &tc, work.path(), true).unwrap();
    let device = ok.read(ArtifactKind::DeviceAsm).unwrap();
    let mut script = MockScript::default();
    script.fail(&device, "link", Some("amd"), "ld.lld: error: undefined symbol: __hip_fatbin\n");
    let tc = tc.with_script(script);
    match compile_hip(&hip, &tc, work.path(), true) {
        Err(BuildError::RecombineFailed(o)) => assert!(o.diagnostics.contains("undefined symbol")),
        other => panic!("expected RecombineFailed, got {other:?}"),
    }
}

#[test]
fn deferred_link_of_hallucinated_mnemonic_fails() {
    let work = tempfile::tempdir().unwrap();
    let spy = Arc::new(LaunchSpy::new());
    let tc = mock(ToolchainName::Amd, &spy);
    let hip = hipify_translate(&cuda(VECADD), &tc, work.path()).unwrap();
    let ok = compile_hip(&hip, &tc, work.path(), true).unwrap();
    let host = ok.read(ArtifactKind::HostAsm).unwrap();
    let device = ok.read(ArtifactKind::DeviceAsm).unwrap().replacen("s_endpgm", "sumba_send_msg_b32 v0, v3", 1);
    match link_deferred(&host, &device, &tc, work.path(), "cand") {
        Err(BuildError::RecombineFailed(o)) => assert!(o.diagnostics.contains("error: invalid instruction")),
        other => panic!("expected RecombineFailed, got {other:?}"),
    }
}

const OCL: &str = "__kernel void scale(__global float *x, float a) {\n    int i = get_global_id(0);\n    x[i] = x[i] * a;\n}\n";

#[test]
fn opencl_paths_on_mock() {
    let work = tempfile::tempdir().unwrap();
    let spy = Arc::new(LaunchSpy::new());
    let unit = SourceUnit::new(Origin::Opencl, Lang::Opencl, OCL, "k.cl", None, None);
    let nv = compile_opencl(&unit, &mock(ToolchainName::OpenclNvidia, &spy), work.path()).unwrap();
    assert!(nv.read(ArtifactKind::Ptx).unwrap().contains(".version"));
    assert!(nv.read(ArtifactKind::DeviceAsm).unwrap().contains("Function : scale"));
    let amd = compile_opencl(&unit, &mock(ToolchainName::OpenclAmd, &spy), work.path()).unwrap();
    assert!(amd.read(ArtifactKind::LlvmIr).unwrap().contains("define protected amdgpu_kernel void @scale"));
    assert!(amd.read(ArtifactKind::DeviceAsm).unwrap().contains("scale:"));
    assert_eq!(spy.count(), 0);
}

#[test]
fn missing_helper_is_reported() {
    let work = tempfile::tempdir().unwrap();
    let mut spec = ToolchainSpec::opencl_nvidia("sm_80");
    // make sure no helper on PATH is picked up
    for cmds in spec.commands.values_mut() {
        for c in cmds.iter_mut() {
            if c.argv[0] == "ocl-ptx-dump" {
                c.argv[0] = "/nonexistent/bin/ocl-ptx-dump".into();
            }
        }
    }
    let unit = SourceUnit::new(Origin::Opencl, Lang::Opencl, OCL, "k.cl", None, None);
    let err = compile_opencl(&unit, &Toolchain::new(spec), work.path()).unwrap_err();
    assert!(matches!(err, BuildError::HelperMissing(_)), "{err:?}");
}

#[test]
fn missing_compiler_is_tool_missing() {
    let work = tempfile::tempdir().unwrap();
    let mut spec = ToolchainSpec::nvidia("sm_80");
    for cmds in spec.commands.values_mut() {
        for c in cmds.iter_mut() {
            c.argv[0] = format!("/nonexistent/{}", c.argv[0]);
        }
    }
    let spy = Arc::new(LaunchSpy::new());
    let err = compile_cuda(&cuda(VECADD), &Toolchain::new(spec).with_spy(spy.clone()), work.path()).unwrap_err();
    assert!(matches!(err, BuildError::ToolMissing(_)));
    assert!(err.is_infrastructure());
    assert_eq!(spy.count(), 1);
}

#[test]
fn wrong_language_rejected() {
    let work = tempfile::tempdir().unwrap();
    let spy = Arc::new(LaunchSpy::new());
    let unit = SourceUnit::new(Origin::Stack, Lang::Hip, "int x;", "x.hip", None, None);
    assert!(matches!(
        compile_cuda(&unit, &mock(ToolchainName::Nvidia, &spy), Path::new(work.path())),
        Err(BuildError::WrongLang { .. })
    ));
}

#[test]
#[ignore = "needs nvcc and cuobjdump on PATH"]
fn real_nvidia_toolchain_smoke() {
    let work = tempfile::tempdir().unwrap();
    let out = compile_cuda(&cuda(VECADD), &Toolchain::new(ToolchainSpec::nvidia("sm_80")), work.path()).unwrap();
    let split = forge_core::asmproc::split_nvidia_dump(&out.read(ArtifactKind::MixedDump).unwrap()).unwrap();
    assert!(split.device.token_count > 0 && split.host.token_count > 0);
}
