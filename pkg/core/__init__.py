"""
Core benchmark module

환경, sim2real 래퍼, 에이전트, 보정 앙상블, 정확해, 벤치마크 실행기
"""
