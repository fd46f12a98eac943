"""
cdrtool

通话详单 (CDR) 与手机属性数据融合, 估计大型活动参与者的社会经济地位指标。
"""

__version__ = "0.1.0"
