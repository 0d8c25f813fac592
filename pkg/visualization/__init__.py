"""
Visualization module

결과 리포트(csv/markdown)와 차트 생성
"""
