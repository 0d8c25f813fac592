#!/usr/bin/env python
"""
configs/ 디렉토리의 모든 벤치마크 설정을 실행합니다.

사용법:
  python scripts/run_all_benchmarks.py
  python scripts/run_all_benchmarks.py --configs configs --jobs 4 --report results/report.md
"""
import argparse
import sys
from pathlib import Path

import pandas as pd

# 경로 문제를 피하기 위해 프로젝트 루트를 sys.path에 추가합니다.
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

from core.benchmark import failure_summary, load_bench_configs, read_results, run_benchmark  # noqa: E402
from visualization.report import emit_report  # noqa: E402

RECIPE_PREFIX = "recipes_"


def main():
    parser = argparse.ArgumentParser(
        description="모든 벤치마크 설정 파일을 순서대로 실행합니다.",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    parser.add_argument("--configs", default="configs", help="설정 디렉토리 (기본값: configs)")
    parser.add_argument("--jobs", type=int, default=1, help="병렬 프로세스 수 (기본값: 1)")
    parser.add_argument("--out", default=None, help="결과 CSV (기본값: 설정 파일의 output)")
    parser.add_argument("--report", default=None, help="모든 실행 후 만들 Markdown 리포트 경로")
    args = parser.parse_args()

    config_dir = Path(args.configs)
    if not config_dir.exists():
        print(f"❌ '{config_dir}' 디렉토리를 찾을 수 없습니다.")
        sys.exit(1)

    # 데이터셋 레시피 파일은 gen-data용이므로 제외
    yaml_files = sorted(p for p in config_dir.glob("*.yaml") if not p.name.startswith(RECIPE_PREFIX))
    if not yaml_files:
        print(f"📂 '{config_dir}' 디렉토리에 벤치마크 설정 파일이 없습니다.")
        return

    print(f"🚀 총 {len(yaml_files)}개의 설정 파일을 실행합니다.")
    print("=" * 80)

    outputs, failed_files = set(), []
    for yaml_file in yaml_files:
        print(f"\n📂 {yaml_file.name}")
        try:
            configs = load_bench_configs(str(yaml_file))
            if args.out:
                for config in configs:
                    config.output = args.out
            results = run_benchmark(configs, jobs=args.jobs, verbose=True)
            outputs.update(c.output for c in configs)
            failures = failure_summary(results)
            if not failures.empty:
                print(f"⚠️  {yaml_file.name}: {len(failures)}개 실행 실패")
                failed_files.append(yaml_file.name)
        except Exception as e:
            print(f"❌ {yaml_file.name} 처리 중 오류 발생: {e}")
            failed_files.append(yaml_file.name)
            # 한 설정에서 오류가 발생하더라도 다음 설정을 계속 처리합니다.
            continue

    if args.report and outputs:
        try:
            frame = pd.concat([read_results(o) for o in sorted(outputs) if Path(o).exists()], ignore_index=True)
            emit_report(frame, 'markdown', args.report)
            print(f"\n✅ 리포트 저장: {args.report}")
        except Exception as e:
            print(f"❌ 리포트 생성 실패: {e}")
            failed_files.append("report")

    print("=" * 80)
    if failed_files:
        print(f"⚠️  오류가 있었던 항목: {', '.join(failed_files)}")
        sys.exit(1)
    print("🎉 모든 벤치마크 실행이 완료되었습니다.")


if __name__ == "__main__":
    main()
