"""
Data layer module

오프라인 데이터셋 포맷, 레시피, tier 데이터 생성과 오염
"""
